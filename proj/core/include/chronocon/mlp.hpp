#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace chronocon {

enum class Nonlinearity { Relu, Tanh };

std::string nonlinearity_name(Nonlinearity n);
Nonlinearity nonlinearity_from_name(const std::string& name);

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Nonlinearity activation = Nonlinearity::Relu;

  bool operator==(const MlpSpec&) const = default;
};

// Dense multilayer perceptron on a single flat parameter vector. Forward
// caches activations; backward is hand-written reverse mode returning both
// parameter and input gradients (finite differences are the test oracle).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // He initialization for relu, Glorot for tanh; biases zero; linear output
  // layer gets a 1/fan_in scale.
  void init_random(std::uint64_t seed);

  struct ParamView {
    std::string name;  // "layer<k>/W" or "layer<k>/b"
    int offset = 0;
    int rows = 0;
    int cols = 0;  // column-major within the flat vector
  };
  std::vector<ParamView> param_views() const;

  struct Activations {
    std::vector<Eigen::MatrixXd> layer_inputs;    // input to each layer
    std::vector<Eigen::MatrixXd> preactivations;  // per hidden layer
  };

  // X is (batch x input_dim); returns (batch x output_dim).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Activations* cache = nullptr) const;

  // Accumulates d loss / d params into param_grad (must be param_count()
  // long) and returns d loss / d X.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_output, const Activations& cache,
                           Eigen::VectorXd& param_grad) const;

 private:
  MlpSpec spec_;
  Eigen::VectorXd params_;
  std::vector<int> dims_;        // [input, hidden..., output]
  std::vector<int> w_offsets_;   // per layer
  std::vector<int> b_offsets_;

  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
};

// Decoupled-weight-decay adaptive moment estimation; beta = (0.9, 0.999),
// eps = 1e-8 by default.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(int n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
            double weight_decay);

 private:
  Eigen::VectorXd m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace chronocon
