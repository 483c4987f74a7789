#include "chronocon/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "chronocon/rng.hpp"

namespace chronocon {

std::string nonlinearity_name(Nonlinearity n) {
  return n == Nonlinearity::Relu ? "relu" : "tanh";
}

Nonlinearity nonlinearity_from_name(const std::string& name) {
  if (name == "relu") return Nonlinearity::Relu;
  if (name == "tanh") return Nonlinearity::Tanh;
  throw std::runtime_error("unknown nonlinearity '" + name + "'");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim < 1 || spec_.output_dim < 1)
    throw std::invalid_argument("Mlp: dimensions must be positive");
  for (int h : spec_.hidden)
    if (h < 1) throw std::invalid_argument("Mlp: hidden widths must be positive");
  dims_.push_back(spec_.input_dim);
  for (int h : spec_.hidden) dims_.push_back(h);
  dims_.push_back(spec_.output_dim);

  int offset = 0;
  for (size_t l = 0; l + 1 < dims_.size(); ++l) {
    w_offsets_.push_back(offset);
    offset += dims_[l + 1] * dims_[l];
    b_offsets_.push_back(offset);
    offset += dims_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int layer) const {
  return {params_.data() + w_offsets_[layer], dims_[layer + 1], dims_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + b_offsets_[layer], dims_[layer + 1]};
}

void Mlp::init_random(std::uint64_t seed) {
  const int n_layers = static_cast<int>(w_offsets_.size());
  for (int l = 0; l < n_layers; ++l) {
    auto rng = make_rng(seed, 0x317aa, static_cast<std::uint64_t>(l));
    const int fan_in = dims_[l];
    const int fan_out = dims_[l + 1];
    double std_dev;
    if (l == n_layers - 1) {
      std_dev = std::sqrt(1.0 / fan_in);  // linear output layer
    } else if (spec_.activation == Nonlinearity::Relu) {
      std_dev = std::sqrt(2.0 / fan_in);
    } else {
      std_dev = std::sqrt(2.0 / (fan_in + fan_out));
    }
    std::normal_distribution<double> gauss(0.0, std_dev);
    for (int k = 0; k < fan_out * fan_in; ++k) params_[w_offsets_[l] + k] = gauss(rng);
    for (int k = 0; k < fan_out; ++k) params_[b_offsets_[l] + k] = 0.0;
  }
}

std::vector<Mlp::ParamView> Mlp::param_views() const {
  std::vector<ParamView> views;
  for (size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::string tag = "layer" + std::to_string(l);
    views.push_back({tag + "/W", w_offsets_[l], dims_[l + 1], dims_[l]});
    views.push_back({tag + "/b", b_offsets_[l], dims_[l + 1], 1});
  }
  return views;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, Activations* cache) const {
  if (X.cols() != spec_.input_dim)
    throw std::invalid_argument("Mlp::forward: expected " + std::to_string(spec_.input_dim) +
                                " input columns, got " + std::to_string(X.cols()));
  const int n_layers = static_cast<int>(w_offsets_.size());
  Eigen::MatrixXd a = X;
  if (cache) {
    cache->layer_inputs.clear();
    cache->preactivations.clear();
  }
  for (int l = 0; l < n_layers; ++l) {
    if (cache) cache->layer_inputs.push_back(a);
    Eigen::MatrixXd z = a * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l < n_layers - 1) {
      if (cache) cache->preactivations.push_back(z);
      if (spec_.activation == Nonlinearity::Relu) {
        a = z.cwiseMax(0.0);
      } else {
        a = z.array().tanh().matrix();
      }
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& d_output, const Activations& cache,
                              Eigen::VectorXd& param_grad) const {
  const int n_layers = static_cast<int>(w_offsets_.size());
  if (param_grad.size() != params_.size())
    throw std::invalid_argument("Mlp::backward: param_grad size mismatch");
  if (static_cast<int>(cache.layer_inputs.size()) != n_layers)
    throw std::invalid_argument("Mlp::backward: stale activation cache");

  Eigen::MatrixXd dz = d_output;
  for (int l = n_layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& a_in = cache.layer_inputs[l];
    Eigen::Map<Eigen::MatrixXd> dW(param_grad.data() + w_offsets_[l], dims_[l + 1], dims_[l]);
    Eigen::Map<Eigen::VectorXd> db(param_grad.data() + b_offsets_[l], dims_[l + 1]);
    dW += dz.transpose() * a_in;
    db += dz.colwise().sum().transpose();
    Eigen::MatrixXd da = dz * weight(l);
    if (l > 0) {
      const Eigen::MatrixXd& z = cache.preactivations[l - 1];
      if (spec_.activation == Nonlinearity::Relu) {
        dz = (z.array() > 0.0).cast<double>() * da.array();
      } else {
        dz = (1.0 - z.array().tanh().square()) * da.array();
      }
    } else {
      dz = std::move(da);
    }
  }
  return dz;  // d loss / d X
}

AdamW::AdamW(int n, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)),
      beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
                 double weight_decay) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamW::step: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_.array().matrix() + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  // Decoupled weight decay is applied directly to the parameters.
  params -= lr * weight_decay * params;
  params -= (lr / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
}

}  // namespace chronocon
