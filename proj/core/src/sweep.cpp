#include "chronocon/sweep.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "chronocon/rng.hpp"

namespace chronocon {

SweepVariant sweep_variant_from_name(const std::string& name) {
  if (name == "scratch") return {name, std::nullopt, false, 1.0};
  if (name == "chrono_dae") return {name, LossVariant::Chrono, true, 0.1};
  if (name == "chrono") return {name, LossVariant::Chrono, false, 0.1};
  if (name == "dae") return {name, LossVariant::DaeOnly, true, 0.1};
  if (name == "rnc_t_dae") return {name, LossVariant::RncTime, true, 0.1};
  if (name == "simclr_dae") return {name, LossVariant::SimCLR, true, 0.1};
  if (name == "rnc" || name == "ordinal_y" || name == "rnc_dae" || name == "ordinal_y_dae")
    throw std::runtime_error("sweep variant '" + name +
                             "' pretrains on labels, which the label-efficiency mask "
                             "removes; use the pretrain subcommand on a fully labeled "
                             "cohort instead");
  throw std::runtime_error("unknown sweep variant '" + name + "'");
}

void SweepSpec::validate(int n_train_patients) const {
  if (repetitions < 1) throw std::invalid_argument("sweep: repetitions must be >= 1");
  if (labeled_counts.empty()) throw std::invalid_argument("sweep: empty labeled_counts");
  for (int n : labeled_counts) {
    if (n < 1) throw std::invalid_argument("sweep: labeled counts must be positive");
    if (n > n_train_patients)
      throw std::invalid_argument("sweep: labeled count " + std::to_string(n) +
                                  " exceeds " + std::to_string(n_train_patients) +
                                  " train patients");
  }
  if (variants.empty()) throw std::invalid_argument("sweep: no variants");
  std::set<std::string> seen;
  for (const auto& v : variants) {
    sweep_variant_from_name(v);
    if (!seen.insert(v).second)
      throw std::invalid_argument("sweep: duplicate variant '" + v + "'");
  }
}

std::uint64_t sweep_mask_seed(std::uint64_t sweep_seed, int rep) {
  return derive_seed(sweep_seed, 0x3a5c, static_cast<std::uint64_t>(rep));
}

std::uint64_t sweep_pretrain_seed(std::uint64_t sweep_seed, const std::string& variant,
                                  int rep) {
  return derive_seed(sweep_seed, hash_string(variant), 0xffffffffULL,
                     static_cast<std::uint64_t>(rep));
}

std::uint64_t sweep_finetune_seed(std::uint64_t sweep_seed, const std::string& variant,
                                  int n_labeled, int rep) {
  return derive_seed(sweep_seed, hash_string(variant), static_cast<std::uint64_t>(n_labeled),
                     static_cast<std::uint64_t>(rep));
}

PretrainResult run_sweep_pretrain(const Cohort& cohort, const SweepVariant& variant,
                                  int rep, std::uint64_t sweep_seed,
                                  const TrainConfig& base_cfg) {
  if (!variant.pretrain_variant)
    throw std::invalid_argument("run_sweep_pretrain: variant '" + variant.name +
                                "' has no pretraining stage");
  TrainConfig cfg = base_cfg;
  cfg.seed = sweep_pretrain_seed(sweep_seed, variant.name, rep);
  return pretrain(cohort, *variant.pretrain_variant, variant.use_dae, cfg);
}

namespace {

std::string sanitize_tag(std::string msg) {
  for (auto& ch : msg)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  if (msg.size() > 120) msg.resize(120);
  return msg;
}

}  // namespace

SweepRow run_sweep_cell(const Cohort& cohort, const SweepVariant& variant, int n_labeled,
                        int rep, std::uint64_t sweep_seed, const TrainConfig& base_cfg,
                        const EvalOptions& eval_opts, const Mlp* pretrained) {
  SweepRow row;
  row.variant = variant.name;
  row.n_labeled = n_labeled;
  row.rep = rep;
  try {
    const Cohort masked =
        subsample_labeled_patients(cohort, n_labeled, sweep_mask_seed(sweep_seed, rep));

    TrainConfig cfg = base_cfg;
    cfg.seed = sweep_finetune_seed(sweep_seed, variant.name, n_labeled, rep);
    cfg.stage2_encoder_lr_factor = variant.stage2_encoder_lr_factor;

    Mlp encoder;
    if (variant.pretrain_variant) {
      if (pretrained == nullptr)
        throw std::runtime_error("cell for '" + variant.name +
                                 "' needs a pretrained encoder");
      encoder = *pretrained;
    } else {
      encoder = Mlp({cohort.feature_dim, cfg.encoder_hidden, cfg.embed_dim, cfg.activation});
      encoder.init_random(derive_seed(cfg.seed, 0xe2c));
    }

    const FinetuneResult ft = finetune(encoder, masked, cfg);
    const auto predictions = predict_scores(ft.encoder, ft.regressor, cohort);
    const ScoreTable table = build_score_table(cohort, predictions, Split::Test);

    EvalOptions opts = eval_opts;
    opts.clip_max = clip_map(cohort);
    opts.seed = derive_seed(cfg.seed, 0xe7a1);
    const EvalReport report = evaluate_tables(table, opts);

    row.cross = report.cross_sectional;
    row.longit = report.longitudinal;
    if (report.error_corr_valid) {
      row.c = report.error_corr.c;
      row.mse_delta_empirical = report.error_corr.mse_delta_empirical;
      row.mse_delta_model = report.error_corr.mse_delta_model;
    }
    row.best_val_mae = ft.best_val_mae;
    row.status = "ok";
  } catch (const std::exception& e) {
    row.status = "error:" + sanitize_tag(e.what());
  }
  return row;
}

}  // namespace chronocon
