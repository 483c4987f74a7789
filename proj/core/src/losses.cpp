#include "chronocon/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace chronocon {

namespace {

void check_cosine_operand(const Eigen::VectorXd& v) {
  if (v.norm() == 0.0)
    throw std::invalid_argument("similarity: cosine undefined for zero vector");
}

}  // namespace

double similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                  const SimilarityKind& sim) {
  if (!(sim.temperature > 0.0))
    throw std::invalid_argument("similarity: temperature must be positive");
  switch (sim.kind) {
    case SimilarityMetric::NegL2: {
      const double d2 = (u - v).squaredNorm();
      return sim.squared ? -d2 / sim.temperature : -std::sqrt(d2) / sim.temperature;
    }
    case SimilarityMetric::Cosine: {
      check_cosine_operand(u);
      check_cosine_operand(v);
      return u.dot(v) / (u.norm() * v.norm() * sim.temperature);
    }
  }
  throw std::logic_error("similarity: invalid metric");
}

namespace {

// d sim(u, v) / du; the v-gradient is the mirrored call.
Eigen::VectorXd similarity_grad_u(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                  const SimilarityKind& sim) {
  switch (sim.kind) {
    case SimilarityMetric::NegL2: {
      if (sim.squared) return -2.0 / sim.temperature * (u - v);
      const double d = (u - v).norm();
      if (d == 0.0) return Eigen::VectorXd::Zero(u.size());  // subgradient at 0
      return -(u - v) / (sim.temperature * d);
    }
    case SimilarityMetric::Cosine: {
      const double nu = u.norm(), nv = v.norm();
      const double dot = u.dot(v);
      return (v / (nu * nv) - dot * u / (nu * nu * nu * nv)) / sim.temperature;
    }
  }
  throw std::logic_error("similarity_grad_u: invalid metric");
}

// Evaluates one term; when `weight` is nonzero also accumulates the analytic
// gradient (softmax cross-entropy composed with the similarity Jacobian).
double term_loss_and_grad(const PairTerm& term, const EmbeddingMatrix& emb,
                          const SimilarityKind& sim, double weight, GradientBuffer* grad) {
  if (term.negatives.empty())
    throw std::invalid_argument("pair_term_loss: term has no negatives");

  const Eigen::VectorXd va = emb.row(term.anchor);
  const int n_logits = 1 + static_cast<int>(term.negatives.size());
  Eigen::VectorXd logits(n_logits);
  logits[0] = similarity(va, emb.row(term.positive), sim);
  for (int k = 0; k < n_logits - 1; ++k)
    logits[k + 1] = similarity(va, emb.row(term.negatives[k]), sim);

  const double m = logits.maxCoeff();
  const Eigen::VectorXd shifted = (logits.array() - m).exp();
  const double z = shifted.sum();
  const double loss = -logits[0] + m + std::log(z);

  if (grad != nullptr && weight != 0.0) {
    // d loss / d logit_j = softmax_j - [j == positive]
    Eigen::VectorXd dlogits = shifted / z;
    dlogits[0] -= 1.0;
    dlogits *= weight;

    auto accumulate = [&](int other, double coeff) {
      const Eigen::VectorXd vo = emb.row(other);
      const Eigen::VectorXd du = similarity_grad_u(va, vo, sim);
      const Eigen::VectorXd dv = similarity_grad_u(vo, va, sim);
      grad->row(term.anchor) += coeff * du.transpose();
      grad->row(other) += coeff * dv.transpose();
    };
    accumulate(term.positive, dlogits[0]);
    for (int k = 0; k < n_logits - 1; ++k) accumulate(term.negatives[k], dlogits[k + 1]);
  }
  return loss;
}

LossOutput directional_loss(const PairingPlan& plan, const EmbeddingMatrix& emb,
                            const SimilarityKind& sim) {
  LossOutput out;
  out.grad = GradientBuffer::Zero(emb.rows(), emb.cols());
  out.term_values.reserve(plan.terms.size());
  const double wf = plan.n_forward > 0 ? 1.0 / plan.n_forward : 0.0;
  const double wb = plan.n_backward > 0 ? 1.0 / plan.n_backward : 0.0;
  for (const auto& term : plan.terms) {
    const double w = term.direction == PairDirection::Forward ? wf : wb;
    const double v = term_loss_and_grad(term, emb, sim, w, &out.grad);
    out.term_values.push_back(v);
    out.value += w * v;
  }
  return out;
}

LossOutput mean_loss(const PairingPlan& plan, const EmbeddingMatrix& emb,
                     const SimilarityKind& sim) {
  LossOutput out;
  out.grad = GradientBuffer::Zero(emb.rows(), emb.cols());
  out.term_values.reserve(plan.terms.size());
  const double w = plan.terms.empty() ? 0.0 : 1.0 / static_cast<double>(plan.terms.size());
  for (const auto& term : plan.terms) {
    const double v = term_loss_and_grad(term, emb, sim, w, &out.grad);
    out.term_values.push_back(v);
    out.value += w * v;
  }
  return out;
}

}  // namespace

double pair_term_loss(const PairTerm& term, const EmbeddingMatrix& embeddings,
                      const SimilarityKind& sim) {
  return term_loss_and_grad(term, embeddings, sim, 0.0, nullptr);
}

LossOutput chronocon_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                          const SimilarityKind& sim) {
  return directional_loss(plan, embeddings, sim);
}

LossOutput ordinal_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                        const SimilarityKind& sim) {
  return directional_loss(plan, embeddings, sim);
}

LossOutput rnc_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                    const SimilarityKind& sim) {
  return mean_loss(plan, embeddings, sim);
}

LossOutput rnc_time_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                         const SimilarityKind& sim) {
  return mean_loss(plan, embeddings, sim);
}

LossOutput simclr_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                       const SimilarityKind& sim) {
  return mean_loss(plan, embeddings, sim);
}

DaeLossOutput dae_loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& noisy_inputs,
                       const Eigen::MatrixXd& reconstructions) {
  if (inputs.rows() != reconstructions.rows() || inputs.cols() != reconstructions.cols() ||
      inputs.rows() != noisy_inputs.rows() || inputs.cols() != noisy_inputs.cols()) {
    throw std::invalid_argument("dae_loss: shape mismatch");
  }
  const double n = static_cast<double>(inputs.size());
  DaeLossOutput out;
  const Eigen::MatrixXd diff = reconstructions - inputs;
  out.value = diff.squaredNorm() / n;
  out.grad = 2.0 / n * diff;
  return out;
}

}  // namespace chronocon
