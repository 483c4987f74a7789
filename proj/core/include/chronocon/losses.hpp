#pragma once

#include <Eigen/Core>
#include <vector>

#include "chronocon/pairing.hpp"

namespace chronocon {

// Rows of these matrices are per-batch-element latent vectors / gradients.
using EmbeddingMatrix = Eigen::MatrixXd;
using GradientBuffer = Eigen::MatrixXd;

enum class SimilarityMetric { NegL2, Cosine };

struct SimilarityKind {
  SimilarityMetric kind = SimilarityMetric::NegL2;
  double temperature = 1.0;
  // Squared Euclidean distance instead of the distance itself; off by default.
  bool squared = false;
};

struct LossOutput {
  double value = 0.0;
  GradientBuffer grad;              // d value / d embeddings, same shape
  std::vector<double> term_values;  // per-PairTerm losses, in plan order
};

// NegL2: -||u - v||_2 / tau (or squared when requested).
// Cosine: (u . v) / (||u|| ||v|| tau); throws on a zero vector.
double similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                  const SimilarityKind& sim);

// -log[ exp(s_ap) / (exp(s_ap) + sum_n exp(s_an)) ], stabilized by
// subtracting the max logit. Requires at least one negative.
double pair_term_loss(const PairTerm& term, const EmbeddingMatrix& embeddings,
                      const SimilarityKind& sim);

// Balanced two-direction sum: mean of forward terms plus mean of backward
// terms, each direction normalized by its own term count. An empty
// direction contributes 0; an empty plan yields value 0 and zero gradient.
LossOutput chronocon_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                          const SimilarityKind& sim);

// Plain mean of per-pair losses over all terms (single normalizer).
LossOutput rnc_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                    const SimilarityKind& sim);
LossOutput rnc_time_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                         const SimilarityKind& sim);
LossOutput simclr_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                       const SimilarityKind& sim);

// Ordinal variant reuses the two-normalizer form.
LossOutput ordinal_loss(const PairingPlan& plan, const EmbeddingMatrix& embeddings,
                        const SimilarityKind& sim);

struct DaeLossOutput {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d value / d reconstructions
};

// Mean squared error between reconstructions and clean inputs, with the
// gradient taken with respect to the reconstructions.
DaeLossOutput dae_loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& noisy_inputs,
                       const Eigen::MatrixXd& reconstructions);

}  // namespace chronocon
