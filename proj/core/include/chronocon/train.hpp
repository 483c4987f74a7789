#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chronocon/cohort.hpp"
#include "chronocon/config.hpp"
#include "chronocon/losses.hpp"
#include "chronocon/mlp.hpp"

namespace chronocon {

enum class LossVariant { Chrono, RncLabel, RncTime, OrdinalY, SimCLR, DaeOnly };

std::string loss_variant_name(LossVariant v);
// Accepts the CLI spellings: chrono | rnc | rnc-t | ordinal-y | simclr | dae.
LossVariant loss_variant_from_name(const std::string& name);

struct TrainConfig {
  int batch_size = 64;
  // Learning rates default to the tuned base values for batch 512, scaled
  // proportionally to the configured batch size. An explicit config value
  // is taken as-is.
  std::optional<double> encoder_lr;
  std::optional<double> head_lr;
  double weight_decay = 1e-6;
  double stage2_encoder_lr_factor = 0.1;
  double dae_weight = 1e3;
  double dae_noise = 1e-5;  // clipped gaussian input noise for the DAE
  int early_stop_patience = 10;
  int plateau_patience = 5;
  double plateau_factor = 0.5;
  int max_epochs = 60;             // stage 1
  std::optional<int> stage2_max_epochs;
  std::uint64_t seed = 0;
  double aug_noise = 0.01;         // additive view noise
  double aug_dropout = 0.1;        // per-coordinate dropout probability

  std::vector<int> encoder_hidden = {64, 64};
  int embed_dim = 16;
  Nonlinearity activation = Nonlinearity::Relu;
  std::vector<int> head_hidden = {128, 128};

  SimilarityKind sim;              // NegL2, tau = 1 unless overridden
  bool sim_overridden = false;

  static TrainConfig from_config(const Config& cfg);
  double encoder_lr_effective() const;
  double head_lr_effective() const;
  int stage2_epochs() const { return stage2_max_epochs.value_or(max_epochs); }
  // SimCLR defaults to cosine similarity with tau = 0.07 when the config
  // does not pin a similarity explicitly.
  SimilarityKind sim_for(LossVariant variant) const;
};

struct BatchPlan {
  std::vector<std::vector<int>> batches;  // indices into cohort.samples
  std::vector<std::string> warnings;
};

// Hierarchically grouped batches: a drawn group's samples stay contiguous in
// one batch whenever the group fits (oversized groups are split with a
// warning). Groups are drawn with replacement, uniformly or -- when labels
// are available -- with probability proportional to 1 + median(group label).
// The composition is a deterministic function of (seed, epoch).
BatchPlan build_batches(const Cohort& cohort, const std::vector<int>& sample_indices,
                        int batch_size, bool labels_available, std::uint64_t seed,
                        std::uint64_t epoch);

// Two stochastic views of a view-0 sample: identical metadata, independently
// perturbed features (additive gaussian noise plus coordinate dropout).
std::pair<Sample, Sample> augment_two_views(const Sample& sample, double noise_scale,
                                            double dropout_prob, std::uint64_t seed);

Eigen::MatrixXd features_matrix(const std::vector<Sample>& samples);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  Mlp encoder;
  Mlp decoder;  // trained only when the DAE objective was active
  std::vector<EpochStats> curve;
};

// Stage 1: contrastive pretraining (optionally with the weighted DAE
// auxiliary), or DAE alone. Runs for max_epochs with the plateau scheduler;
// aborts with a diagnostic on non-finite loss. Deterministic per seed.
PretrainResult pretrain(const Cohort& cohort, LossVariant variant, bool use_dae,
                        const TrainConfig& cfg);

struct Regressor {
  std::vector<std::string> score_names;
  std::vector<double> clip_max;  // applied at aggregation time only
  std::vector<Mlp> heads;
};

struct FinetuneEpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mae = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

struct FinetuneResult {
  Mlp encoder;
  Regressor regressor;
  std::vector<FinetuneEpochStats> curve;
  double best_val_mae = 0.0;
  int best_epoch = -1;
};

// Stage 2: multi-head MSE regression over present labels only. The encoder
// moves at stage2_encoder_lr_factor times its stage-1 rate (a factor of 0
// freezes it exactly). Early stopping restores the best validation-MAE
// parameters.
FinetuneResult finetune(const Mlp& encoder, const Cohort& cohort, const TrainConfig& cfg);

struct Prediction {
  std::int64_t sample_id = 0;
  std::string score_name;
  double y_pred = 0.0;  // raw head output; clipping happens at aggregation
};

// Deterministic forward pass without augmentation, every sample x head.
std::vector<Prediction> predict_scores(const Mlp& encoder, const Regressor& regressor,
                                       const Cohort& cohort);

// Encoder-composed objective for gradient verification: embeds the batch,
// applies the variant's loss (plus the weighted DAE path through `decoder`
// when given), and accumulates parameter gradients.
double encoder_objective(const Mlp& encoder, const Mlp* decoder,
                         const std::vector<Sample>& batch, LossVariant variant,
                         double dae_weight, const SimilarityKind& sim,
                         Eigen::VectorXd* encoder_grad, Eigen::VectorXd* decoder_grad);

}  // namespace chronocon
