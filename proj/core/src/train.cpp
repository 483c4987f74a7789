#include "chronocon/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "chronocon/rng.hpp"
#include "chronocon/stats.hpp"

namespace chronocon {

std::string loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::Chrono: return "chrono";
    case LossVariant::RncLabel: return "rnc";
    case LossVariant::RncTime: return "rnc-t";
    case LossVariant::OrdinalY: return "ordinal-y";
    case LossVariant::SimCLR: return "simclr";
    case LossVariant::DaeOnly: return "dae";
  }
  throw std::logic_error("loss_variant_name: invalid variant");
}

LossVariant loss_variant_from_name(const std::string& name) {
  if (name == "chrono") return LossVariant::Chrono;
  if (name == "rnc") return LossVariant::RncLabel;
  if (name == "rnc-t") return LossVariant::RncTime;
  if (name == "ordinal-y") return LossVariant::OrdinalY;
  if (name == "simclr") return LossVariant::SimCLR;
  if (name == "dae") return LossVariant::DaeOnly;
  throw std::runtime_error("unknown loss variant '" + name + "'");
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig c;
  c.batch_size = static_cast<int>(cfg.get_int("batch_size", c.batch_size));
  if (cfg.has("encoder_lr")) c.encoder_lr = cfg.get_double("encoder_lr", 0.0);
  if (cfg.has("head_lr")) c.head_lr = cfg.get_double("head_lr", 0.0);
  c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
  c.stage2_encoder_lr_factor =
      cfg.get_double("stage2_encoder_lr_factor", c.stage2_encoder_lr_factor);
  c.dae_weight = cfg.get_double("dae_weight", c.dae_weight);
  c.dae_noise = cfg.get_double("dae_noise", c.dae_noise);
  c.early_stop_patience =
      static_cast<int>(cfg.get_int("early_stop_patience", c.early_stop_patience));
  c.plateau_patience = static_cast<int>(cfg.get_int("plateau_patience", c.plateau_patience));
  c.plateau_factor = cfg.get_double("plateau_factor", c.plateau_factor);
  c.max_epochs = static_cast<int>(cfg.get_int("max_epochs", c.max_epochs));
  if (cfg.has("stage2_max_epochs"))
    c.stage2_max_epochs = static_cast<int>(cfg.get_int("stage2_max_epochs", 0));
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
  c.aug_noise = cfg.get_double("aug_noise", c.aug_noise);
  c.aug_dropout = cfg.get_double("aug_dropout", c.aug_dropout);

  auto to_ints = [](const std::vector<double>& xs) {
    std::vector<int> out;
    for (double x : xs) out.push_back(static_cast<int>(x));
    return out;
  };
  c.encoder_hidden = to_ints(cfg.get_double_list(
      "encoder_hidden", {static_cast<double>(c.encoder_hidden[0]),
                         static_cast<double>(c.encoder_hidden[1])}));
  c.embed_dim = static_cast<int>(cfg.get_int("embed_dim", c.embed_dim));
  c.activation = nonlinearity_from_name(
      cfg.get_string("activation", nonlinearity_name(c.activation)));
  c.head_hidden = to_ints(cfg.get_double_list(
      "head_hidden", {static_cast<double>(c.head_hidden[0]),
                      static_cast<double>(c.head_hidden[1])}));

  if (cfg.has("sim_kind") || cfg.has("tau") || cfg.has("sim_squared")) {
    c.sim_overridden = true;
    const std::string kind = cfg.get_string("sim_kind", "neg_l2");
    if (kind == "neg_l2") c.sim.kind = SimilarityMetric::NegL2;
    else if (kind == "cosine") c.sim.kind = SimilarityMetric::Cosine;
    else throw std::runtime_error("config: sim_kind must be neg_l2 or cosine");
    c.sim.temperature = cfg.get_double("tau", c.sim.temperature);
    c.sim.squared = cfg.get_bool("sim_squared", c.sim.squared);
  }

  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (c.early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
  if (c.max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
  if (c.encoder_lr_effective() <= 0 || c.head_lr_effective() <= 0)
    throw std::invalid_argument("learning rates must be positive");
  if (!(c.sim.temperature > 0)) throw std::invalid_argument("tau must be positive");
  return c;
}

double TrainConfig::encoder_lr_effective() const {
  return encoder_lr ? *encoder_lr : 4e-4 * batch_size / 512.0;
}

double TrainConfig::head_lr_effective() const {
  return head_lr ? *head_lr : 4e-5 * batch_size / 512.0;
}

SimilarityKind TrainConfig::sim_for(LossVariant variant) const {
  if (!sim_overridden && variant == LossVariant::SimCLR)
    return SimilarityKind{SimilarityMetric::Cosine, 0.07, false};
  return sim;
}

namespace {

int weighted_index(const std::vector<double>& cumulative, double total,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, total);
  const double u = uni(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) return static_cast<int>(cumulative.size()) - 1;
  return static_cast<int>(it - cumulative.begin());
}

}  // namespace

BatchPlan build_batches(const Cohort& cohort, const std::vector<int>& sample_indices,
                        int batch_size, bool labels_available, std::uint64_t seed,
                        std::uint64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("build_batches: batch_size must be >= 1");
  BatchPlan plan;
  if (sample_indices.empty()) return plan;

  std::map<std::string, std::vector<int>> groups;
  for (int i : sample_indices) groups[cohort.samples[i].group_id].push_back(i);

  std::vector<const std::vector<int>*> members;
  std::vector<double> weights;
  std::vector<std::string> names;
  for (const auto& [name, idxs] : groups) {
    members.push_back(&idxs);
    names.push_back(name);
    double w = 1.0;
    if (labels_available) {
      std::vector<double> values;
      for (int i : idxs)
        for (const auto& [score, y] : cohort.samples[i].labels) {
          (void)score;
          values.push_back(y);
        }
      if (!values.empty()) w = 1.0 + stats::median(values);
    }
    weights.push_back(w);
  }
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    cumulative[i] = total;
  }

  auto rng = make_rng(seed, 0xba7c4, epoch);
  std::set<std::string> warned;
  std::vector<int> current;
  for (size_t draw = 0; draw < groups.size(); ++draw) {
    const int g = weighted_index(cumulative, total, rng);
    const auto& idxs = *members[g];
    if (static_cast<int>(idxs.size()) > batch_size) {
      if (warned.insert(names[g]).second)
        plan.warnings.push_back("group '" + names[g] + "' (" +
                                std::to_string(idxs.size()) +
                                " samples) exceeds batch_size and was split");
      if (!current.empty()) {
        plan.batches.push_back(current);
        current.clear();
      }
      for (size_t k = 0; k < idxs.size(); k += batch_size) {
        const size_t end = std::min(idxs.size(), k + batch_size);
        plan.batches.emplace_back(idxs.begin() + k, idxs.begin() + end);
      }
      continue;
    }
    if (static_cast<int>(current.size() + idxs.size()) > batch_size) {
      plan.batches.push_back(current);
      current.clear();
    }
    current.insert(current.end(), idxs.begin(), idxs.end());
  }
  if (!current.empty()) plan.batches.push_back(current);
  return plan;
}

std::pair<Sample, Sample> augment_two_views(const Sample& sample, double noise_scale,
                                            double dropout_prob, std::uint64_t seed) {
  if (sample.view_id != 0)
    throw std::invalid_argument("augment_two_views: expected a view-0 sample");
  auto rng = make_rng(seed, 0xa06);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  auto make_view = [&](int view_id) {
    Sample v = sample;
    v.view_id = view_id;
    for (auto& f : v.features) {
      if (noise_scale > 0) f += noise_scale * gauss(rng);
      if (dropout_prob > 0 && uni(rng) < dropout_prob) f = 0.0;
    }
    return v;
  };
  Sample v0 = make_view(0);
  Sample v1 = make_view(1);
  return {std::move(v0), std::move(v1)};
}

Eigen::MatrixXd features_matrix(const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd X(samples.size(), samples[0].features.size());
  for (size_t i = 0; i < samples.size(); ++i)
    for (size_t d = 0; d < samples[i].features.size(); ++d) X(i, d) = samples[i].features[d];
  return X;
}

namespace {

PairingPlan make_plan(LossVariant variant, const std::vector<Sample>& batch) {
  switch (variant) {
    case LossVariant::Chrono: return chrono_pairs(batch);
    case LossVariant::RncLabel: return rnc_label_pairs(batch);
    case LossVariant::RncTime: return rnc_time_pairs(batch);
    case LossVariant::OrdinalY: return ordinal_label_pairs(batch);
    case LossVariant::SimCLR: return simclr_pairs(batch);
    case LossVariant::DaeOnly: return {};
  }
  throw std::logic_error("make_plan: invalid variant");
}

LossOutput plan_loss(LossVariant variant, const PairingPlan& plan,
                     const EmbeddingMatrix& emb, const SimilarityKind& sim) {
  switch (variant) {
    case LossVariant::Chrono: return chronocon_loss(plan, emb, sim);
    case LossVariant::RncLabel: return rnc_loss(plan, emb, sim);
    case LossVariant::RncTime: return rnc_time_loss(plan, emb, sim);
    case LossVariant::OrdinalY: return ordinal_loss(plan, emb, sim);
    case LossVariant::SimCLR: return simclr_loss(plan, emb, sim);
    case LossVariant::DaeOnly: {
      LossOutput out;
      out.grad = GradientBuffer::Zero(emb.rows(), emb.cols());
      return out;
    }
  }
  throw std::logic_error("plan_loss: invalid variant");
}

Eigen::MatrixXd clipped_gaussian_noise(Eigen::Index rows, Eigen::Index cols, double sigma,
                                       std::mt19937_64& rng) {
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(rows, cols);
  if (sigma <= 0) return noise;
  std::normal_distribution<double> gauss(0.0, sigma);
  const double clip = 3.0 * sigma;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      noise(i, j) = std::clamp(gauss(rng), -clip, clip);
  return noise;
}

struct Stage1Batch {
  std::vector<Sample> views;   // contrastive elements (empty for DAE-only)
  Eigen::MatrixXd dae_clean;   // DAE targets
  Eigen::MatrixXd dae_noisy;   // DAE encoder inputs
};

Stage1Batch assemble_stage1_batch(const Cohort& cohort, const std::vector<int>& batch,
                                  LossVariant variant, bool use_dae,
                                  const TrainConfig& cfg, std::uint64_t aug_seed) {
  Stage1Batch out;
  const bool contrastive = variant != LossVariant::DaeOnly;
  std::vector<Sample> first_views;
  for (size_t k = 0; k < batch.size(); ++k) {
    const Sample& s = cohort.samples[batch[k]];
    auto [v0, v1] = augment_two_views(s, cfg.aug_noise, cfg.aug_dropout,
                                      derive_seed(aug_seed, static_cast<std::uint64_t>(k)));
    if (contrastive) {
      first_views.push_back(v0);
      out.views.push_back(std::move(v0));
      out.views.push_back(std::move(v1));
    } else {
      first_views.push_back(std::move(v0));  // second crop discarded
    }
  }
  if (use_dae || variant == LossVariant::DaeOnly) {
    out.dae_clean = features_matrix(first_views);
    auto rng = make_rng(aug_seed, 0xdae);
    out.dae_noisy = out.dae_clean + clipped_gaussian_noise(out.dae_clean.rows(),
                                                           out.dae_clean.cols(),
                                                           cfg.dae_noise, rng);
  }
  return out;
}

struct Stage1Step {
  double loss = 0.0;
  Eigen::VectorXd encoder_grad;
  Eigen::VectorXd decoder_grad;
};

Stage1Step stage1_forward_backward(const Mlp& encoder, const Mlp* decoder,
                                   const Stage1Batch& sb, LossVariant variant,
                                   double dae_weight, const SimilarityKind& sim,
                                   bool want_grads) {
  Stage1Step step;
  const bool dae_active = decoder != nullptr && sb.dae_clean.size() > 0;
  const Eigen::Index n_views = static_cast<Eigen::Index>(sb.views.size());
  const Eigen::Index n_dae = dae_active ? sb.dae_clean.rows() : 0;

  Eigen::MatrixXd X(n_views + n_dae, encoder.spec().input_dim);
  if (n_views > 0) X.topRows(n_views) = features_matrix(sb.views);
  if (n_dae > 0) X.bottomRows(n_dae) = sb.dae_noisy;
  if (X.rows() == 0) return step;

  Mlp::Activations enc_cache;
  const Eigen::MatrixXd V = encoder.forward(X, want_grads ? &enc_cache : nullptr);

  Eigen::MatrixXd dV = Eigen::MatrixXd::Zero(V.rows(), V.cols());
  if (n_views > 0) {
    const PairingPlan plan = make_plan(variant, sb.views);
    const LossOutput contrastive = plan_loss(variant, plan, V.topRows(n_views), sim);
    step.loss += contrastive.value;
    if (want_grads) dV.topRows(n_views) = contrastive.grad;
  }
  if (dae_active) {
    Mlp::Activations dec_cache;
    const Eigen::MatrixXd recon =
        decoder->forward(V.bottomRows(n_dae), want_grads ? &dec_cache : nullptr);
    const DaeLossOutput dae = dae_loss(sb.dae_clean, sb.dae_noisy, recon);
    step.loss += dae_weight * dae.value;
    if (want_grads) {
      step.decoder_grad = Eigen::VectorXd::Zero(decoder->param_count());
      dV.bottomRows(n_dae) =
          decoder->backward(dae_weight * dae.grad, dec_cache, step.decoder_grad);
    }
  }
  if (want_grads) {
    step.encoder_grad = Eigen::VectorXd::Zero(encoder.param_count());
    encoder.backward(dV, enc_cache, step.encoder_grad);
  }
  return step;
}

[[noreturn]] void abort_non_finite(const std::string& stage, int epoch, size_t batch,
                                   double loss, const Mlp& encoder) {
  std::ostringstream diag;
  diag << stage << ": non-finite loss (" << loss << ") at epoch " << epoch << ", batch "
       << batch << "; encoder |params|=" << encoder.params().norm()
       << ", max|param|=" << encoder.params().cwiseAbs().maxCoeff();
  throw std::runtime_error(diag.str());
}

}  // namespace

PretrainResult pretrain(const Cohort& cohort, LossVariant variant, bool use_dae,
                        const TrainConfig& cfg) {
  if (cohort.samples.empty()) throw std::invalid_argument("pretrain: empty cohort");
  const bool labels_needed =
      variant == LossVariant::RncLabel || variant == LossVariant::OrdinalY;
  const bool dae_active = use_dae || variant == LossVariant::DaeOnly;
  const SimilarityKind sim = cfg.sim_for(variant);

  std::vector<int> train_idx = split_sample_indices(cohort, Split::Train);
  std::vector<int> val_idx = split_sample_indices(cohort, Split::Val);
  if (cohort.split_assignment.empty()) {
    train_idx.resize(cohort.samples.size());
    for (size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = static_cast<int>(i);
  }
  if (train_idx.empty()) throw std::invalid_argument("pretrain: no training samples");
  if (labels_needed) {
    for (int i : train_idx)
      if (cohort.samples[i].labels.empty())
        throw std::runtime_error("pretrain: variant " + loss_variant_name(variant) +
                                 " requires labels; sample " +
                                 std::to_string(cohort.samples[i].sample_id) + " has none");
  }

  PretrainResult result;
  result.encoder = Mlp({cohort.feature_dim, cfg.encoder_hidden, cfg.embed_dim, cfg.activation});
  result.encoder.init_random(derive_seed(cfg.seed, 0xe2c));
  std::vector<int> mirrored(cfg.encoder_hidden.rbegin(), cfg.encoder_hidden.rend());
  result.decoder = Mlp({cfg.embed_dim, mirrored, cohort.feature_dim, cfg.activation});
  result.decoder.init_random(derive_seed(cfg.seed, 0xdec));

  AdamW enc_opt(result.encoder.param_count());
  AdamW dec_opt(result.decoder.param_count());
  double lr = cfg.encoder_lr_effective();

  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto plan = build_batches(cohort, train_idx, cfg.batch_size, labels_needed,
                                    cfg.seed, static_cast<std::uint64_t>(epoch));
    double train_loss = 0.0;
    size_t n_batches = 0;
    for (size_t b = 0; b < plan.batches.size(); ++b) {
      const auto sb = assemble_stage1_batch(
          cohort, plan.batches[b], variant, use_dae, cfg,
          derive_seed(cfg.seed, 0x7a1, static_cast<std::uint64_t>(epoch), b));
      auto step = stage1_forward_backward(result.encoder,
                                          dae_active ? &result.decoder : nullptr, sb,
                                          variant, cfg.dae_weight, sim, true);
      if (!std::isfinite(step.loss))
        abort_non_finite("pretrain", epoch, b, step.loss, result.encoder);
      if (step.encoder_grad.size() > 0)
        enc_opt.step(result.encoder.params(), step.encoder_grad, lr, cfg.weight_decay);
      if (dae_active && step.decoder_grad.size() > 0)
        dec_opt.step(result.decoder.params(), step.decoder_grad, lr, cfg.weight_decay);
      train_loss += step.loss;
      ++n_batches;
    }
    if (n_batches > 0) train_loss /= static_cast<double>(n_batches);

    double val_loss = train_loss;
    if (!val_idx.empty()) {
      const auto vplan = build_batches(cohort, val_idx, cfg.batch_size, labels_needed,
                                       derive_seed(cfg.seed, 0x7a1), epoch);
      double acc = 0.0;
      size_t nb = 0;
      for (size_t b = 0; b < vplan.batches.size(); ++b) {
        const auto sb = assemble_stage1_batch(
            cohort, vplan.batches[b], variant, use_dae, cfg,
            derive_seed(cfg.seed, 0x7a2, static_cast<std::uint64_t>(epoch), b));
        const auto step = stage1_forward_backward(
            result.encoder, dae_active ? &result.decoder : nullptr, sb, variant,
            cfg.dae_weight, sim, false);
        acc += step.loss;
        ++nb;
      }
      if (nb > 0) val_loss = acc / static_cast<double>(nb);
    }

    result.curve.push_back({epoch, train_loss, val_loss, lr});
    if (val_loss < best_val - 1e-12) {
      best_val = val_loss;
      stall = 0;
    } else if (++stall >= cfg.plateau_patience) {
      lr *= cfg.plateau_factor;
      stall = 0;
    }
  }
  return result;
}

namespace {

double label_mae(const Mlp& encoder, const Regressor& reg, const Cohort& cohort,
                 const std::vector<int>& idx, double* mse_out) {
  double abs_sum = 0.0, sq_sum = 0.0;
  long n = 0;
  if (idx.empty()) {
    if (mse_out) *mse_out = std::numeric_limits<double>::quiet_NaN();
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<Sample> samples;
  samples.reserve(idx.size());
  for (int i : idx) samples.push_back(cohort.samples[i]);
  const Eigen::MatrixXd V = encoder.forward(features_matrix(samples));
  for (size_t h = 0; h < reg.heads.size(); ++h) {
    const Eigen::MatrixXd Y = reg.heads[h].forward(V);
    for (size_t k = 0; k < samples.size(); ++k) {
      auto it = samples[k].labels.find(reg.score_names[h]);
      if (it == samples[k].labels.end()) continue;
      const double err = Y(static_cast<Eigen::Index>(k), 0) - it->second;
      abs_sum += std::fabs(err);
      sq_sum += err * err;
      ++n;
    }
  }
  if (n == 0) {
    if (mse_out) *mse_out = std::numeric_limits<double>::quiet_NaN();
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (mse_out) *mse_out = sq_sum / n;
  return abs_sum / n;
}

}  // namespace

FinetuneResult finetune(const Mlp& encoder0, const Cohort& cohort, const TrainConfig& cfg) {
  if (cohort.score_types.empty()) throw std::invalid_argument("finetune: no score types");

  std::vector<int> train_idx = split_sample_indices(cohort, Split::Train);
  std::vector<int> val_idx = split_sample_indices(cohort, Split::Val);
  if (cohort.split_assignment.empty()) {
    train_idx.resize(cohort.samples.size());
    for (size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = static_cast<int>(i);
  }

  // Only groups with at least one present label can contribute gradient;
  // the MSE objective over present labels is unchanged by dropping the rest.
  std::map<std::string, bool> group_labeled;
  for (int i : train_idx)
    group_labeled[cohort.samples[i].group_id] |= !cohort.samples[i].labels.empty();
  std::vector<int> labeled_idx;
  for (int i : train_idx)
    if (group_labeled[cohort.samples[i].group_id]) labeled_idx.push_back(i);
  bool any_label = false;
  for (int i : labeled_idx) any_label |= !cohort.samples[i].labels.empty();
  if (!any_label) throw std::runtime_error("finetune: no labeled training samples");

  FinetuneResult result;
  result.encoder = encoder0;
  for (const auto& st : cohort.score_types) {
    result.regressor.score_names.push_back(st.name);
    result.regressor.clip_max.push_back(st.max_value);
    Mlp head({cfg.embed_dim, cfg.head_hidden, 1, cfg.activation});
    head.init_random(derive_seed(cfg.seed, 0x4ead, result.regressor.heads.size()));
    result.regressor.heads.push_back(std::move(head));
  }
  if (result.encoder.spec().output_dim != cfg.embed_dim)
    throw std::invalid_argument("finetune: encoder embed dim does not match config");

  AdamW enc_opt(result.encoder.param_count());
  std::vector<AdamW> head_opts;
  for (auto& h : result.regressor.heads) head_opts.emplace_back(h.param_count());

  const double enc_lr0 = cfg.encoder_lr_effective() * cfg.stage2_encoder_lr_factor;
  double lr_scale = 1.0;
  double best_mae = std::numeric_limits<double>::infinity();
  double best_plateau = std::numeric_limits<double>::infinity();
  int stall_plateau = 0, stall_early = 0;
  Eigen::VectorXd best_encoder = result.encoder.params();
  std::vector<Eigen::VectorXd> best_heads;
  for (const auto& h : result.regressor.heads) best_heads.push_back(h.params());
  result.best_val_mae = std::numeric_limits<double>::quiet_NaN();

  for (int epoch = 0; epoch < cfg.stage2_epochs(); ++epoch) {
    const auto plan = build_batches(cohort, labeled_idx, cfg.batch_size, true, cfg.seed,
                                    static_cast<std::uint64_t>(epoch));
    double train_sq = 0.0;
    long train_n = 0;
    for (size_t b = 0; b < plan.batches.size(); ++b) {
      std::vector<Sample> batch;
      batch.reserve(plan.batches[b].size());
      auto rng = make_rng(cfg.seed, 0x57a2e2, static_cast<std::uint64_t>(epoch), b);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (int i : plan.batches[b]) {
        Sample s = cohort.samples[i];
        for (auto& f : s.features) {
          if (cfg.aug_noise > 0) f += cfg.aug_noise * gauss(rng);
          if (cfg.aug_dropout > 0 && uni(rng) < cfg.aug_dropout) f = 0.0;
        }
        batch.push_back(std::move(s));
      }

      long labeled = 0;
      for (const auto& s : batch) labeled += static_cast<long>(s.labels.size());
      if (labeled == 0) continue;

      Mlp::Activations enc_cache;
      const Eigen::MatrixXd V = result.encoder.forward(features_matrix(batch), &enc_cache);
      Eigen::MatrixXd dV = Eigen::MatrixXd::Zero(V.rows(), V.cols());
      double batch_sq = 0.0;

      for (size_t h = 0; h < result.regressor.heads.size(); ++h) {
        Mlp& head = result.regressor.heads[h];
        Mlp::Activations head_cache;
        const Eigen::MatrixXd Y = head.forward(V, &head_cache);
        Eigen::MatrixXd dY = Eigen::MatrixXd::Zero(Y.rows(), 1);
        bool used = false;
        for (size_t k = 0; k < batch.size(); ++k) {
          auto it = batch[k].labels.find(result.regressor.score_names[h]);
          if (it == batch[k].labels.end()) continue;
          const double err = Y(static_cast<Eigen::Index>(k), 0) - it->second;
          batch_sq += err * err;
          dY(static_cast<Eigen::Index>(k), 0) = 2.0 * err / static_cast<double>(labeled);
          used = true;
        }
        if (!used) continue;
        Eigen::VectorXd head_grad = Eigen::VectorXd::Zero(head.param_count());
        dV += head.backward(dY, head_cache, head_grad);
        head_opts[h].step(head.params(), head_grad, cfg.head_lr_effective() * lr_scale,
                          cfg.weight_decay);
      }

      const double batch_loss = batch_sq / static_cast<double>(labeled);
      if (!std::isfinite(batch_loss))
        abort_non_finite("finetune", epoch, b, batch_loss, result.encoder);
      train_sq += batch_sq;
      train_n += labeled;

      if (cfg.stage2_encoder_lr_factor > 0) {
        Eigen::VectorXd enc_grad = Eigen::VectorXd::Zero(result.encoder.param_count());
        result.encoder.backward(dV, enc_cache, enc_grad);
        enc_opt.step(result.encoder.params(), enc_grad, enc_lr0 * lr_scale, cfg.weight_decay);
      }
    }

    double val_mse = 0.0;
    double val_mae = label_mae(result.encoder, result.regressor, cohort, val_idx, &val_mse);
    double train_mse = train_n > 0 ? train_sq / train_n : 0.0;
    if (std::isnan(val_mae)) {  // no validation labels: fall back to train loss
      val_mae = std::sqrt(train_mse);
      val_mse = train_mse;
    }
    result.curve.push_back({epoch, train_mse, val_mae, val_mse,
                            cfg.head_lr_effective() * lr_scale});

    if (val_mae < best_mae) {
      best_mae = val_mae;
      result.best_val_mae = val_mae;
      result.best_epoch = epoch;
      best_encoder = result.encoder.params();
      for (size_t h = 0; h < result.regressor.heads.size(); ++h)
        best_heads[h] = result.regressor.heads[h].params();
      stall_early = 0;
    } else if (++stall_early >= cfg.early_stop_patience) {
      break;
    }

    if (val_mse < best_plateau - 1e-12) {
      best_plateau = val_mse;
      stall_plateau = 0;
    } else if (++stall_plateau >= cfg.plateau_patience) {
      lr_scale *= cfg.plateau_factor;
      stall_plateau = 0;
    }
  }

  result.encoder.params() = best_encoder;
  for (size_t h = 0; h < result.regressor.heads.size(); ++h)
    result.regressor.heads[h].params() = best_heads[h];
  return result;
}

std::vector<Prediction> predict_scores(const Mlp& encoder, const Regressor& regressor,
                                       const Cohort& cohort) {
  std::vector<Prediction> out;
  if (cohort.samples.empty()) return out;
  const Eigen::MatrixXd V = encoder.forward(features_matrix(cohort.samples));
  std::vector<Eigen::MatrixXd> head_out;
  head_out.reserve(regressor.heads.size());
  for (const auto& head : regressor.heads) head_out.push_back(head.forward(V));
  for (size_t k = 0; k < cohort.samples.size(); ++k)
    for (size_t h = 0; h < regressor.heads.size(); ++h)
      out.push_back({cohort.samples[k].sample_id, regressor.score_names[h],
                     head_out[h](static_cast<Eigen::Index>(k), 0)});
  return out;
}

double encoder_objective(const Mlp& encoder, const Mlp* decoder,
                         const std::vector<Sample>& batch, LossVariant variant,
                         double dae_weight, const SimilarityKind& sim,
                         Eigen::VectorXd* encoder_grad, Eigen::VectorXd* decoder_grad) {
  Stage1Batch sb;
  if (variant != LossVariant::DaeOnly) sb.views = batch;
  if (decoder != nullptr) {
    sb.dae_clean = features_matrix(batch);
    sb.dae_noisy = sb.dae_clean;  // noise-free path keeps the objective deterministic
  }
  const auto step = stage1_forward_backward(encoder, decoder, sb, variant, dae_weight, sim,
                                            encoder_grad != nullptr);
  if (encoder_grad) *encoder_grad = step.encoder_grad;
  if (decoder_grad && decoder != nullptr) *decoder_grad = step.decoder_grad;
  return step.loss;
}

}  // namespace chronocon
