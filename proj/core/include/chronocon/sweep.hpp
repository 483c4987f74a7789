#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chronocon/analysis.hpp"
#include "chronocon/cohort.hpp"
#include "chronocon/metrics.hpp"
#include "chronocon/train.hpp"

namespace chronocon {

// One arm of the label-efficiency comparison. The single-stage baseline
// ("scratch") skips pretraining and trains the encoder at the full rate.
struct SweepVariant {
  std::string name;
  std::optional<LossVariant> pretrain_variant;
  bool use_dae = false;
  double stage2_encoder_lr_factor = 0.1;
};

// Known names: scratch, chrono_dae, chrono, dae, rnc_t_dae, simclr_dae.
// Label-based pretraining variants are rejected here: under label masking
// the stage-1 labels they require do not exist.
SweepVariant sweep_variant_from_name(const std::string& name);

struct SweepSpec {
  std::vector<int> labeled_counts = {5, 10, 20, 40, 80, 120};
  std::vector<std::string> variants = {"chrono_dae", "scratch"};
  int repetitions = 5;
  std::uint64_t seed = 0;

  void validate(int n_train_patients) const;
};

// The label mask for a repetition is shared by every variant and nested
// across labeled counts (a prefix of one seeded shuffle), so arms compare
// on identical data.
std::uint64_t sweep_mask_seed(std::uint64_t sweep_seed, int rep);
std::uint64_t sweep_pretrain_seed(std::uint64_t sweep_seed, const std::string& variant,
                                  int rep);
std::uint64_t sweep_finetune_seed(std::uint64_t sweep_seed, const std::string& variant,
                                  int n_labeled, int rep);

// Stage-1 model for one (variant, rep); shared across labeled counts since
// unsupervised pretraining never sees labels.
PretrainResult run_sweep_pretrain(const Cohort& cohort, const SweepVariant& variant,
                                  int rep, std::uint64_t sweep_seed,
                                  const TrainConfig& base_cfg);

// One cell end-to-end: mask labels, fine-tune (from `pretrained` when given),
// predict on the test split, evaluate. Failures are captured in the row's
// status tag instead of propagating.
SweepRow run_sweep_cell(const Cohort& cohort, const SweepVariant& variant, int n_labeled,
                        int rep, std::uint64_t sweep_seed, const TrainConfig& base_cfg,
                        const EvalOptions& eval_opts, const Mlp* pretrained);

}  // namespace chronocon
