#include <doctest.h>

#include <map>
#include <set>

#include "chronocon/cohort.hpp"
#include "chronocon/pairing.hpp"
#include "chronocon/stats.hpp"
#include "chronocon/synthetic.hpp"
#include "chronocon/train.hpp"
#include "helpers.hpp"

using namespace chronocon;
using testutil::make_sample;

namespace {

Cohort tiny_cohort(int n_patients, double noise = 0.0, std::uint64_t seed = 21) {
  CohortConfig cc;
  cc.n_patients = n_patients;
  cc.rois_per_patient = 2;
  cc.feature_dim = 16;
  cc.severity_dims = 2;
  cc.noise_sigma = noise;
  cc.reader_noise_prob = 0.0;
  cc.seed = seed;
  return split_patients(generate(cc).cohort, 0.6, 0.2, 0.2, seed + 1);
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.encoder_lr = 2e-3;
  cfg.head_lr = 2e-3;
  cfg.max_epochs = 6;
  cfg.stage2_max_epochs = 10;
  cfg.head_hidden = {16, 16};
  cfg.encoder_hidden = {32, 32};
  cfg.embed_dim = 8;
  return cfg;
}

std::vector<int> all_indices(const Cohort& c) {
  std::vector<int> out(c.samples.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

}  // namespace

TEST_CASE("build_batches: everything fits in one batch") {
  const Cohort cohort = tiny_cohort(4);
  const auto plan = build_batches(cohort, all_indices(cohort), 10000, false, 1, 0);
  REQUIRE(plan.batches.size() >= 1);
  size_t total = 0;
  for (const auto& b : plan.batches) total += b.size();
  // Sampling with replacement repeats groups; the union of distinct samples
  // in one giant batch still cannot exceed the cohort.
  CHECK(plan.batches[0].size() <= 10000);
  CHECK(total >= 1);
}

TEST_CASE("build_batches keeps groups contiguous and deterministic") {
  const Cohort cohort = tiny_cohort(10);
  const auto plan_a = build_batches(cohort, all_indices(cohort), 16, false, 3, 2);
  const auto plan_b = build_batches(cohort, all_indices(cohort), 16, false, 3, 2);
  CHECK(plan_a.batches == plan_b.batches);
  const auto plan_c = build_batches(cohort, all_indices(cohort), 16, false, 3, 3);
  CHECK(plan_a.batches != plan_c.batches);

  for (const auto& batch : plan_a.batches) {
    CHECK(static_cast<int>(batch.size()) <= 16);
    // Group members are contiguous runs.
    std::set<std::string> seen;
    std::string current;
    for (int i : batch) {
      const auto& g = cohort.samples[i].group_id;
      if (g != current) {
        CHECK(!seen.count(g));
        seen.insert(g);
        current = g;
      }
    }
  }
}

TEST_CASE("build_batches: uniform group frequencies without labels") {
  Cohort cohort;
  cohort.feature_dim = 1;
  cohort.score_types = {{"s", 8}};
  const int n_groups = 8;
  for (int g = 0; g < n_groups; ++g)
    cohort.samples.push_back(make_sample(g, "p" + std::to_string(g) + "/j", 0.0, 0, {0.0},
                                         {{"s", g % 3}}));

  std::map<std::string, long> counts;
  long total = 0;
  const int epochs = 4000;
  for (int e = 0; e < epochs; ++e) {
    const auto plan = build_batches(cohort, all_indices(cohort), 4, false, 17, e);
    for (const auto& b : plan.batches)
      for (int i : b) {
        counts[cohort.samples[i].group_id]++;
        ++total;
      }
  }
  const double expected = static_cast<double>(total) / n_groups;
  const double sigma = std::sqrt(expected * (1.0 - 1.0 / n_groups));
  for (const auto& [g, n] : counts)
    CHECK(std::fabs(n - expected) < 3.0 * sigma);
}

TEST_CASE("build_batches: equal medians reduce oversampling to uniform") {
  Cohort cohort;
  cohort.feature_dim = 1;
  cohort.score_types = {{"s", 8}};
  for (int g = 0; g < 5; ++g)
    cohort.samples.push_back(make_sample(g, "p" + std::to_string(g) + "/j", 0.0, 0, {0.0},
                                         {{"s", 2}}));
  // Same seed/epoch: weighted draws with equal weights match unweighted ones.
  const auto weighted = build_batches(cohort, all_indices(cohort), 3, true, 5, 1);
  const auto uniform = build_batches(cohort, all_indices(cohort), 3, true, 5, 1);
  CHECK(weighted.batches == uniform.batches);
}

TEST_CASE("build_batches: oversized group is split with a warning") {
  Cohort cohort;
  cohort.feature_dim = 1;
  for (int i = 0; i < 9; ++i)
    cohort.samples.push_back(make_sample(i, "p0/j", static_cast<double>(i), 0, {0.0}, {}));
  const auto plan = build_batches(cohort, all_indices(cohort), 4, false, 1, 0);
  CHECK(!plan.warnings.empty());
  for (const auto& b : plan.batches) CHECK(static_cast<int>(b.size()) <= 4);
}

TEST_CASE("augment_two_views: degenerate settings reproduce the input") {
  const Sample s = make_sample(3, "p0/j", 1.5, 0, {1.0, -2.0, 0.5}, {{"s", 2}});
  const auto [v0, v1] = augment_two_views(s, 0.0, 0.0, 9);
  CHECK(v0.features == s.features);
  CHECK(v1.features == s.features);
  CHECK(v0.view_id == 0);
  CHECK(v1.view_id == 1);
}

TEST_CASE("augment_two_views preserves metadata and perturbs features") {
  const Sample s = make_sample(3, "p0/j", 1.5, 0, {1.0, -2.0, 0.5}, {{"s", 2}});
  const auto [v0, v1] = augment_two_views(s, 0.1, 0.1, 9);
  for (const Sample* v : {&v0, &v1}) {
    CHECK(v->group_id == s.group_id);
    CHECK(v->timestamp == s.timestamp);
    CHECK(v->labels == s.labels);
    CHECK(v->sample_id == s.sample_id);
  }
  CHECK(v0.features != v1.features);
  CHECK_THROWS(augment_two_views(v1, 0.1, 0.1, 9));  // view_id != 0
}

TEST_CASE("a 2-visit group contributes after double-view augmentation") {
  std::vector<Sample> views;
  for (int visit = 0; visit < 2; ++visit) {
    const Sample s = make_sample(visit, "p0/j", static_cast<double>(visit), 0, {0.5}, {});
    auto [v0, v1] = augment_two_views(s, 0.05, 0.0, 7 + visit);
    views.push_back(std::move(v0));
    views.push_back(std::move(v1));
  }
  CHECK(!chrono_pairs(views).terms.empty());
}

TEST_CASE("pretrain: zero epochs returns the seeded initialization") {
  const Cohort cohort = tiny_cohort(6);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 0;
  cfg.seed = 12;
  const auto result = pretrain(cohort, LossVariant::Chrono, false, cfg);
  Mlp reference({cohort.feature_dim, cfg.encoder_hidden, cfg.embed_dim, cfg.activation});
  reference.init_random(derive_seed(cfg.seed, 0xe2c));
  CHECK(result.encoder.params() == reference.params());
  CHECK(result.curve.empty());
}

TEST_CASE("pretrain: chrono loss descends on a monotone cohort") {
  const Cohort cohort = tiny_cohort(12);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 8;
  cfg.seed = 5;
  const auto result = pretrain(cohort, LossVariant::Chrono, false, cfg);
  REQUIRE(result.curve.size() == 8);
  CHECK(result.curve.back().train_loss < result.curve.front().train_loss);
}

TEST_CASE("pretrain is deterministic for a fixed seed") {
  const Cohort cohort = tiny_cohort(6);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 3;
  cfg.seed = 9;
  const auto a = pretrain(cohort, LossVariant::Chrono, true, cfg);
  const auto b = pretrain(cohort, LossVariant::Chrono, true, cfg);
  CHECK(a.encoder.params() == b.encoder.params());
  CHECK(a.decoder.params() == b.decoder.params());
}

TEST_CASE("pretrain: label variants require labels") {
  Cohort cohort = tiny_cohort(6);
  const Cohort masked = subsample_labeled_patients(cohort, 0, 1);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 1;
  CHECK_THROWS(pretrain(masked, LossVariant::RncLabel, false, cfg));
  CHECK_THROWS(pretrain(masked, LossVariant::OrdinalY, false, cfg));
}

TEST_CASE("finetune: overfits a single labeled sample") {
  Cohort cohort;
  cohort.feature_dim = 4;
  cohort.score_types = {{"s", 8}};
  cohort.samples.push_back(make_sample(0, "p0/j", 0.0, 0, {0.2, -0.1, 0.3, 0.5}, {{"s", 5}}));

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.encoder_lr = 1e-2;
  cfg.head_lr = 1e-2;
  cfg.stage2_encoder_lr_factor = 0.0;  // frozen encoder: head must do the work
  cfg.stage2_max_epochs = 800;
  cfg.early_stop_patience = 800;
  cfg.head_hidden = {8, 8};
  cfg.embed_dim = 4;
  cfg.encoder_hidden = {8};
  cfg.aug_noise = 0.0;
  cfg.aug_dropout = 0.0;
  cfg.seed = 3;

  Mlp encoder({4, {8}, 4, Nonlinearity::Relu});
  encoder.init_random(2);
  const Eigen::VectorXd frozen = encoder.params();

  const auto result = finetune(encoder, cohort, cfg);
  CHECK(result.encoder.params() == frozen);  // factor 0 never moves the encoder

  const auto preds = predict_scores(result.encoder, result.regressor, cohort);
  double fitted = 0.0;
  for (const auto& p : preds)
    if (p.score_name == "s") fitted = p.y_pred;
  CHECK(std::fabs(fitted - 5.0) < 1e-2);
}

TEST_CASE("finetune: fails without labeled samples") {
  Cohort cohort = tiny_cohort(6);
  const Cohort masked = subsample_labeled_patients(cohort, 0, 1);
  TrainConfig cfg = fast_config();
  CHECK_THROWS(finetune(Mlp({16, {32, 32}, 8, Nonlinearity::Relu}), masked, cfg));
}

TEST_CASE("finetune: early stopping restores the best recorded epoch") {
  const Cohort cohort = tiny_cohort(10, 0.05);
  TrainConfig cfg = fast_config();
  cfg.stage2_max_epochs = 12;
  cfg.seed = 7;
  Mlp encoder({16, {32, 32}, 8, Nonlinearity::Relu});
  encoder.init_random(4);
  const auto result = finetune(encoder, cohort, cfg);
  REQUIRE(!result.curve.empty());
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  for (const auto& e : result.curve)
    if (e.val_mae < best) {
      best = e.val_mae;
      best_epoch = e.epoch;
    }
  CHECK(result.best_epoch == best_epoch);
  CHECK(result.best_val_mae == doctest::Approx(best));
}

TEST_CASE("finetune: best val MAE is nonincreasing in max_epochs") {
  const Cohort cohort = tiny_cohort(10, 0.05);
  Mlp encoder({16, {32, 32}, 8, Nonlinearity::Relu});
  encoder.init_random(4);

  TrainConfig cfg = fast_config();
  cfg.seed = 7;
  cfg.early_stop_patience = 100;  // isolate the monotone bookkeeping contract
  cfg.stage2_max_epochs = 4;
  const double short_run = finetune(encoder, cohort, cfg).best_val_mae;
  cfg.stage2_max_epochs = 12;
  const double long_run = finetune(encoder, cohort, cfg).best_val_mae;
  CHECK(long_run <= short_run + 1e-12);
}

TEST_CASE("finetune never depends on masked-out label values") {
  Cohort a = tiny_cohort(8);
  Cohort b = a;
  // Corrupt labels of patients that the mask below will drop; masking must
  // erase any trace of them.
  const Cohort masked_probe = subsample_labeled_patients(a, 2, 13);
  std::set<std::string> kept;
  for (const auto& s : masked_probe.samples)
    if (!s.labels.empty() &&
        a.split_assignment.at(patient_root(s.group_id)) == Split::Train)
      kept.insert(patient_root(s.group_id));
  for (auto& s : b.samples) {
    const auto root = patient_root(s.group_id);
    if (a.split_assignment.at(root) == Split::Train && !kept.count(root))
      for (auto& [name, y] : s.labels) y = 8 - y;
  }

  const Cohort masked_a = subsample_labeled_patients(a, 2, 13);
  const Cohort masked_b = subsample_labeled_patients(b, 2, 13);
  CHECK(masked_a == masked_b);

  TrainConfig cfg = fast_config();
  cfg.stage2_max_epochs = 3;
  cfg.seed = 1;
  Mlp encoder({16, {32, 32}, 8, Nonlinearity::Relu});
  encoder.init_random(4);
  const auto ra = finetune(encoder, masked_a, cfg);
  const auto rb = finetune(encoder, masked_b, cfg);
  CHECK(ra.encoder.params() == rb.encoder.params());
  for (size_t h = 0; h < ra.regressor.heads.size(); ++h)
    CHECK(ra.regressor.heads[h].params() == rb.regressor.heads[h].params());
}

TEST_CASE("predict_scores: deterministic, finite, duplicates agree") {
  Cohort cohort = tiny_cohort(5);
  TrainConfig cfg = fast_config();
  cfg.stage2_max_epochs = 2;
  Mlp encoder({16, {32, 32}, 8, Nonlinearity::Relu});
  encoder.init_random(4);
  const auto result = finetune(encoder, cohort, cfg);

  // Duplicate a sample under a fresh id: its predictions must match.
  Cohort dup = cohort;
  Sample copy = dup.samples[0];
  copy.sample_id = 999999;
  dup.samples.push_back(copy);
  const auto preds = predict_scores(result.encoder, result.regressor, dup);
  std::map<std::string, double> first, cloned;
  for (const auto& p : preds) {
    CHECK(std::isfinite(p.y_pred));
    if (p.sample_id == dup.samples[0].sample_id) first[p.score_name] = p.y_pred;
    if (p.sample_id == 999999) cloned[p.score_name] = p.y_pred;
  }
  CHECK(first == cloned);
}

TEST_CASE("encoder-composed objective matches finite differences") {
  std::mt19937_64 rng(6);
  Mlp encoder({5, {6}, 4, Nonlinearity::Tanh});
  encoder.init_random(8);
  Mlp decoder({4, {6}, 5, Nonlinearity::Tanh});
  decoder.init_random(9);

  std::vector<Sample> batch;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> f(5);
    for (auto& x : f) x = gauss(rng);
    batch.push_back(make_sample(i, i < 3 ? "a" : "b", static_cast<double>(i % 3), 0, f, {}));
  }

  Eigen::VectorXd enc_grad, dec_grad;
  encoder_objective(encoder, &decoder, batch, LossVariant::Chrono, 10.0, {}, &enc_grad,
                    &dec_grad);

  const auto fd_enc = testutil::finite_difference(
      [&](const Eigen::VectorXd& p) {
        Mlp e = encoder;
        e.params() = p;
        return encoder_objective(e, &decoder, batch, LossVariant::Chrono, 10.0, {}, nullptr,
                                 nullptr);
      },
      encoder.params());
  CHECK(testutil::rel_error(enc_grad, fd_enc) < 1e-4);

  const auto fd_dec = testutil::finite_difference(
      [&](const Eigen::VectorXd& p) {
        Mlp d = decoder;
        d.params() = p;
        return encoder_objective(encoder, &d, batch, LossVariant::Chrono, 10.0, {}, nullptr,
                                 nullptr);
      },
      decoder.params());
  CHECK(testutil::rel_error(dec_grad, fd_dec) < 1e-4);
}

TEST_CASE("representation quality: chrono orders trajectories better than dae") {
  const Cohort cohort = tiny_cohort(20, 0.0, 31);
  TrainConfig cfg = fast_config();
  cfg.max_epochs = 10;
  cfg.seed = 2;

  auto mean_trajectory_spearman = [&](const Mlp& encoder) {
    std::vector<Sample> samples = cohort.samples;
    const Eigen::MatrixXd V = encoder.forward(features_matrix(samples));
    std::map<std::string, std::vector<int>> groups;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i)
      groups[samples[i].group_id].push_back(i);
    std::vector<double> rhos;
    for (auto& [g, members] : groups) {
      std::sort(members.begin(), members.end(),
                [&](int x, int y) { return samples[x].timestamp < samples[y].timestamp; });
      if (members.size() < 3) continue;
      std::vector<double> sim, order;
      for (size_t k = 1; k < members.size(); ++k) {
        sim.push_back(-(V.row(members[0]) - V.row(members[k])).norm());
        order.push_back(static_cast<double>(k));
      }
      try {
        rhos.push_back(stats::spearman(sim, order));
      } catch (const std::invalid_argument&) {
        // constant similarities carry no ranking signal; skip
      }
    }
    REQUIRE(!rhos.empty());
    return stats::mean(rhos);
  };

  const auto chrono = pretrain(cohort, LossVariant::Chrono, false, cfg);
  const auto dae = pretrain(cohort, LossVariant::DaeOnly, false, cfg);
  const double rho_chrono = mean_trajectory_spearman(chrono.encoder);
  const double rho_dae = mean_trajectory_spearman(dae.encoder);
  CHECK(rho_chrono < 0.0);
  CHECK(rho_chrono < rho_dae);
}
