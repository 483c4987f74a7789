#include <doctest.h>

#include <cmath>
#include <random>

#include "chronocon/metrics.hpp"
#include "chronocon/rng.hpp"
#include "chronocon/stats.hpp"
#include "helpers.hpp"

using namespace chronocon;

namespace {

ScoreRow row(const std::string& patient, double t, const std::string& score,
             std::optional<double> y_true, double y_pred) {
  ScoreRow r;
  r.patient = patient;
  r.timestamp = t;
  r.score_name = score;
  r.y_true = y_true;
  r.y_pred = y_pred;
  return r;
}

}  // namespace

TEST_CASE("aggregate_total: plain sums when nothing is missing") {
  ScoreTable table;
  for (double t : {0.0, 1.0})
    for (int s = 0; s < 3; ++s)
      table.rows.push_back(row("p0", t, "s" + std::to_string(s), s + t, s + t + 0.5));
  const auto totals = aggregate_total(table, {});
  REQUIRE(totals.rows.size() == 2);
  CHECK(totals.rows[0].total_true == doctest::Approx(0 + 1 + 2));
  CHECK(totals.rows[0].total_pred == doctest::Approx(0.5 + 1.5 + 2.5));
  CHECK(totals.rows[1].total_true == doctest::Approx(1 + 2 + 3));
  CHECK(totals.warnings.empty());
}

TEST_CASE("aggregate_total: middle missing value is linearly interpolated") {
  // Equally spaced visits with neighbors 1 and 3: the gap fills with 2.
  ScoreTable table;
  table.rows.push_back(row("p0", 0.0, "a", 1.0, 0.0));
  table.rows.push_back(row("p0", 1.0, "a", std::nullopt, 0.0));
  table.rows.push_back(row("p0", 2.0, "a", 3.0, 0.0));
  // Second subscore present everywhere so no visit crosses the 25% cut
  // (1 of 2 missing = 50% would drop the visit; use 4 subscores instead).
  for (const char* s : {"b", "c", "d"})
    for (double t : {0.0, 1.0, 2.0}) table.rows.push_back(row("p0", t, s, 1.0, 0.0));
  const auto totals = aggregate_total(table, {});
  REQUIRE(totals.rows.size() == 3);
  CHECK(totals.rows[1].total_true == doctest::Approx(2.0 + 3.0));
}

TEST_CASE("aggregate_total: unequal spacing interpolates in time") {
  ScoreTable table;
  table.rows.push_back(row("p0", 0.0, "a", 0.0, 0.0));
  table.rows.push_back(row("p0", 1.0, "a", std::nullopt, 0.0));
  table.rows.push_back(row("p0", 4.0, "a", 8.0, 0.0));
  for (const char* s : {"b", "c", "d"})
    for (double t : {0.0, 1.0, 4.0}) table.rows.push_back(row("p0", t, s, 0.0, 0.0));
  const auto totals = aggregate_total(table, {});
  CHECK(totals.rows[1].total_true == doctest::Approx(2.0));  // 0 + 8 * (1/4)
}

TEST_CASE("aggregate_total: ends extrapolate with constants") {
  ScoreTable table;
  table.rows.push_back(row("p0", 0.0, "a", std::nullopt, 0.0));
  table.rows.push_back(row("p0", 1.0, "a", 5.0, 0.0));
  table.rows.push_back(row("p0", 2.0, "a", std::nullopt, 0.0));
  for (const char* s : {"b", "c", "d"})
    for (double t : {0.0, 1.0, 2.0}) table.rows.push_back(row("p0", t, s, 0.0, 0.0));
  const auto totals = aggregate_total(table, {});
  CHECK(totals.rows[0].total_true == doctest::Approx(5.0));
  CHECK(totals.rows[2].total_true == doctest::Approx(5.0));
}

TEST_CASE("aggregate_total: visits above the missing-fraction cut are dropped") {
  // 10 subscores, 3 missing at t=1 (30% > 25%): visit excluded.
  ScoreTable table;
  for (int s = 0; s < 10; ++s)
    for (double t : {0.0, 1.0, 2.0}) {
      const bool missing = t == 1.0 && s < 3;
      table.rows.push_back(row("p0", t, "s" + std::to_string(s),
                               missing ? std::optional<double>() : 1.0, 1.0));
    }
  const auto totals = aggregate_total(table, {});
  REQUIRE(totals.rows.size() == 2);
  CHECK(totals.rows[0].timestamp == 0.0);
  CHECK(totals.rows[1].timestamp == 2.0);
}

TEST_CASE("aggregate_total: entirely missing series contributes zero with warning") {
  ScoreTable table;
  for (double t : {0.0, 1.0}) {
    table.rows.push_back(row("p0", t, "gone", std::nullopt, 2.0));
    for (const char* s : {"b", "c", "d", "e", "f", "g", "h"})
      table.rows.push_back(row("p0", t, s, 1.0, 1.0));
  }
  const auto totals = aggregate_total(table, {}, 0.5);
  REQUIRE(totals.rows.size() == 2);
  CHECK(totals.rows[0].total_true == doctest::Approx(7.0));  // "gone" adds 0
  CHECK(!totals.warnings.empty());
}

TEST_CASE("aggregate_total clips predicted subscores") {
  ScoreTable table;
  table.rows.push_back(row("p0", 0.0, "a", 3.0, 11.0));
  table.rows.push_back(row("p0", 0.0, "b", 3.0, -2.0));
  const auto totals = aggregate_total(table, {{"a", 5.0}, {"b", 5.0}});
  CHECK(totals.rows[0].total_pred == doctest::Approx(5.0 + 0.0));
  CHECK(totals.rows[0].total_true == doctest::Approx(6.0));
}

TEST_CASE("aggregate_total commutes with row reordering when nothing is missing") {
  std::mt19937_64 rng(3);
  ScoreTable table;
  for (int p = 0; p < 3; ++p)
    for (double t : {0.0, 1.0, 2.0})
      for (int s = 0; s < 3; ++s)
        table.rows.push_back(row("p" + std::to_string(p), t, "s" + std::to_string(s),
                                 static_cast<double>(s + p), 0.1 * s));
  auto shuffled = table;
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), rng);
  const auto a = aggregate_total(table, {});
  const auto b = aggregate_total(shuffled, {});
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].patient == b.rows[i].patient);
    CHECK(a.rows[i].total_true == b.rows[i].total_true);
    CHECK(a.rows[i].total_pred == b.rows[i].total_pred);
  }
}

TEST_CASE("score table rejects duplicate keys") {
  ScoreTable table;
  table.rows.push_back(row("p0", 0.0, "a", 1.0, 1.0));
  table.rows.push_back(row("p0", 0.0, "a", 2.0, 2.0));
  CHECK_THROWS(table.validate());
}

TEST_CASE("progression: deltas in chronological order") {
  TotalsTable totals;
  totals.rows = {{"p0", 0.0, 10.0, 11.0}, {"p0", 1.0, 12.0, 12.5}, {"p0", 3.0, 20.0, 18.0}};
  const auto deltas = progression(totals);
  REQUIRE(deltas.size() == 2);
  CHECK(deltas[0].d_true == doctest::Approx(2.0));
  CHECK(deltas[1].d_true == doctest::Approx(8.0));
  CHECK(deltas[0].d_pred == doctest::Approx(1.5));

  // Constant totals give zero deltas.
  TotalsTable flat;
  flat.rows = {{"p0", 0.0, 5.0, 5.0}, {"p0", 1.0, 5.0, 5.0}};
  for (const auto& d : progression(flat)) {
    CHECK(d.d_true == 0.0);
    CHECK(d.d_pred == 0.0);
  }

  // Delta count = retained visits - 1 per patient.
  CHECK(progression(totals).size() == totals.rows.size() - 1);
}

TEST_CASE("progression antisymmetry under time reversal") {
  TotalsTable totals;
  totals.rows = {{"p0", 0.0, 1.0, 2.0}, {"p0", 1.0, 3.0, 1.0}, {"p0", 2.0, 7.0, 5.0}};
  TotalsTable reversed = totals;
  for (auto& r : reversed.rows) r.timestamp = -r.timestamp;
  const auto fwd = progression(totals);
  auto bwd = progression(reversed);
  std::reverse(bwd.begin(), bwd.end());
  REQUIRE(fwd.size() == bwd.size());
  for (size_t i = 0; i < fwd.size(); ++i) {
    CHECK(fwd[i].d_true == doctest::Approx(-bwd[i].d_true));
    CHECK(fwd[i].d_pred == doctest::Approx(-bwd[i].d_pred));
  }
}

TEST_CASE("icc: perfect agreement gives 1") {
  const std::vector<double> y = {1, 2, 3, 4, 5};
  const auto r = icc(y, y);
  CHECK(r.icc31 == doctest::Approx(1.0));
  CHECK(r.icc21 == doctest::Approx(1.0));
  CHECK(!r.degenerate);
}

TEST_CASE("icc: permuted predictions are near zero on large n") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> y(4000);
  for (auto& v : y) v = gauss(rng);
  std::vector<double> yhat = y;
  std::shuffle(yhat.begin(), yhat.end(), rng);
  const auto r = icc(y, yhat);
  CHECK(std::fabs(r.icc31) < 0.05);
}

TEST_CASE("icc: hand-computed 5-pair ANOVA oracle") {
  // Spreadsheet-style two-way ANOVA with k=2 raters.
  const std::vector<double> yt = {1, 2, 3, 4, 6};
  const std::vector<double> yp = {2, 3, 3, 5, 7};
  const int n = 5;
  const double k = 2;
  double grand = 0;
  for (int i = 0; i < n; ++i) grand += yt[i] + yp[i];
  grand /= k * n;
  double ss_total = 0, ss_subj = 0;
  for (int i = 0; i < n; ++i) {
    ss_total += (yt[i] - grand) * (yt[i] - grand) + (yp[i] - grand) * (yp[i] - grand);
    const double rm = (yt[i] + yp[i]) / 2;
    ss_subj += k * (rm - grand) * (rm - grand);
  }
  double mt = 0, mp = 0;
  for (int i = 0; i < n; ++i) {
    mt += yt[i] / n;
    mp += yp[i] / n;
  }
  const double ss_rater = n * ((mt - grand) * (mt - grand) + (mp - grand) * (mp - grand));
  const double bms = ss_subj / (n - 1);
  const double jms = ss_rater / (k - 1);
  const double ems = (ss_total - ss_subj - ss_rater) / ((n - 1) * (k - 1));
  const double expect31 = (bms - ems) / (bms + (k - 1) * ems);
  const double expect21 = (bms - ems) / (bms + (k - 1) * ems + k * (jms - ems) / n);

  const auto r = icc(yt, yp);
  CHECK(r.icc31 == doctest::Approx(expect31).epsilon(1e-12));
  CHECK(r.icc21 == doctest::Approx(expect21).epsilon(1e-12));
}

TEST_CASE("icc: rater shift moves absolute agreement but not consistency") {
  const std::vector<double> yt = {1, 2, 3, 4, 6};
  const std::vector<double> yp = {2, 3, 3, 5, 7};
  const auto base = icc(yt, yp);

  std::vector<double> shifted = yp;
  for (auto& v : shifted) v += 3.0;  // constant bias on one rater
  const auto biased = icc(yt, shifted);
  CHECK(biased.icc31 == doctest::Approx(base.icc31).epsilon(1e-12));
  CHECK(biased.icc21 < base.icc21 - 0.05);

  // A common constant on both raters changes neither form.
  std::vector<double> yt2 = yt, yp2 = yp;
  for (auto& v : yt2) v += 3.0;
  for (auto& v : yp2) v += 3.0;
  const auto both = icc(yt2, yp2);
  CHECK(both.icc31 == doctest::Approx(base.icc31).epsilon(1e-12));
  CHECK(both.icc21 == doctest::Approx(base.icc21).epsilon(1e-12));
}

TEST_CASE("icc: degenerate and precondition cases") {
  CHECK_THROWS(icc({1, 2}, {1, 2}));                    // n < 3
  CHECK_THROWS(icc({1, 1, 1}, {1, 1, 1}));              // zero total variance
  const auto flat = icc({2, 2, 2}, {1, 3, 1});          // zero between-subject variance
  CHECK(flat.degenerate);
  CHECK(flat.icc31 == 0.0);
}

TEST_CASE("rmse/mae/pearson standard values") {
  const std::vector<double> y = {0, 1, 2, 3};
  CHECK(rmse(y, y) == 0.0);
  CHECK(stats::pearson(y, y) == doctest::Approx(1.0));
  std::vector<double> plus1 = y;
  for (auto& v : plus1) v += 1.0;
  CHECK(rmse(y, plus1) == doctest::Approx(1.0));
  CHECK(mae(y, plus1) == doctest::Approx(1.0));
  CHECK(stats::pearson(y, plus1) == doctest::Approx(1.0));
  const std::vector<double> zero_mean = {-2, -1, 1, 2};
  std::vector<double> negated = zero_mean;
  for (auto& v : negated) v = -v;
  CHECK(stats::pearson(zero_mean, negated) == doctest::Approx(-1.0));
}

TEST_CASE("metrics match naive reference formulas on random inputs") {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int it = 0; it < 30; ++it) {
    const int n = 3 + static_cast<int>(rng() % 48);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = gauss(rng);
      b[i] = a[i] * 0.5 + gauss(rng);
    }
    double ss = 0, ab = 0;
    for (int i = 0; i < n; ++i) {
      ss += (a[i] - b[i]) * (a[i] - b[i]);
      ab += std::fabs(a[i] - b[i]);
    }
    CHECK(rmse(a, b) == doctest::Approx(std::sqrt(ss / n)).epsilon(1e-10));
    CHECK(mae(a, b) == doctest::Approx(ab / n).epsilon(1e-10));
  }
}

TEST_CASE("bootstrap_ci: degenerate statistic gives a point interval") {
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < 10; ++i) clusters.push_back({i});
  const auto ci = bootstrap_ci(clusters, [](const std::vector<int>&) { return 7.5; }, 200, 1);
  CHECK(ci.first == 7.5);
  CHECK(ci.second == 7.5);
}

TEST_CASE("bootstrap_ci: contains the point estimate for the mean") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(1.0, 2.0);
  std::vector<double> xs(60);
  for (auto& x : xs) x = gauss(rng);
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < 60; ++i) clusters.push_back({i});
  auto stat = [&](const std::vector<int>& rows) {
    double s = 0;
    for (int r : rows) s += xs[r];
    return s / rows.size();
  };
  const double point = stat([&] {
    std::vector<int> all(60);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  const auto ci = bootstrap_ci(clusters, stat, 500, 3);
  CHECK(ci.first <= point);
  CHECK(ci.second >= point);
  CHECK(ci.first < ci.second);
}

TEST_CASE("bootstrap_ci: identical seeds agree; B < 100 rejected") {
  std::vector<std::vector<int>> clusters = {{0}, {1}, {2}, {3}, {4}};
  const std::vector<double> xs = {1, 2, 3, 4, 100};
  auto stat = [&](const std::vector<int>& rows) {
    double s = 0;
    for (int r : rows) s += xs[r];
    return s / rows.size();
  };
  CHECK(bootstrap_ci(clusters, stat, 300, 9) == bootstrap_ci(clusters, stat, 300, 9));
  CHECK_THROWS(bootstrap_ci(clusters, stat, 50, 9));
}

TEST_CASE("bootstrap_ci: undefined resamples are redrawn up to the cap") {
  std::vector<std::vector<int>> clusters = {{0}, {1}, {2}};
  int calls = 0;
  // Throws for resamples that picked cluster 0 three times.
  auto stat = [&](const std::vector<int>& rows) {
    ++calls;
    int zeros = 0;
    for (int r : rows) zeros += r == 0 ? 1 : 0;
    if (zeros == 3) throw std::runtime_error("undefined");
    return static_cast<double>(rows.size());
  };
  CHECK_NOTHROW(bootstrap_ci(clusters, stat, 200, 2));
  // Always-undefined statistics exhaust the 10% redraw budget.
  auto bad = [](const std::vector<int>&) -> double { throw std::runtime_error("nope"); };
  CHECK_THROWS(bootstrap_ci(clusters, bad, 200, 2));
}

TEST_CASE("paired_mse_ttest: trivial and table cases") {
  const std::vector<double> a = {1, 2, 3, 4};
  const auto same = paired_mse_ttest(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK(same.degenerate);

  std::vector<double> shifted = a;
  for (auto& v : shifted) v += 2.0;  // constant nonzero difference
  const auto constant = paired_mse_ttest(shifted, a);
  CHECK(constant.degenerate);
  CHECK(constant.p == 0.0);

  CHECK_THROWS(paired_mse_ttest({1.0}, {2.0}));
}

TEST_CASE("paired_mse_ttest reproduces a known t statistic") {
  // Construct differences with mean m and sd s so that t = m / (s / sqrt(n)).
  const std::vector<double> d = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0};
  std::vector<double> zeros(d.size(), 0.0);
  const auto r = paired_mse_ttest(d, zeros);
  const double m = stats::mean(d);
  const double s = std::sqrt(stats::sample_variance(d));
  CHECK(r.t == doctest::Approx(m / (s / std::sqrt(10.0))).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(stats::student_t_two_sided_p(r.t, 9)).epsilon(1e-12));
  CHECK(r.n == 10);
}

TEST_CASE("error_correlation: identity limits") {
  // Perfectly correlated: every visit shares the patient's error.
  std::vector<std::vector<double>> shared;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0.0, 1.5);
  for (int p = 0; p < 50; ++p) {
    const double e = gauss(rng);
    shared.push_back({e, e, e});
  }
  const auto perfect = error_correlation(shared);
  CHECK(perfect.c == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(perfect.mse_delta_empirical == doctest::Approx(0.0));

  CHECK_THROWS(error_correlation({{1.0}, {2.0}}));  // single-visit-only data
}

TEST_CASE("error_correlation: independent errors give the sqrt(2) law") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::vector<std::vector<double>> eps;
  for (int p = 0; p < 4000; ++p) eps.push_back({gauss(rng), gauss(rng), gauss(rng)});
  const auto r = error_correlation(eps);
  CHECK(std::fabs(r.c) < 0.03);
  const double ratio = std::sqrt(r.mse_delta_empirical) / std::sqrt(r.sigma2);
  CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.03));
}

TEST_CASE("error_correlation: designed c = 0.9 is recovered") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = 3.0, c = 0.9;
  std::vector<std::vector<double>> eps;
  for (int p = 0; p < 1000; ++p) {
    const double shared_part = std::sqrt(c) * sigma * gauss(rng);
    std::vector<double> e;
    for (int v = 0; v < 4; ++v)
      e.push_back(shared_part + std::sqrt(1.0 - c) * sigma * gauss(rng));
    eps.push_back(std::move(e));
  }
  const auto r = error_correlation(eps);
  CHECK(r.c > 0.85);
  CHECK(r.c < 0.95);
  CHECK(r.mse_delta_empirical ==
        doctest::Approx(r.mse_delta_model).epsilon(0.05));
}

TEST_CASE("evaluate_tables produces a coherent report") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> noise(0.0, 0.3);
  ScoreTable table;
  for (int p = 0; p < 12; ++p)
    for (double t : {0.0, 1.0, 2.0})
      for (int s = 0; s < 2; ++s) {
        const double y = p % 5 + t;
        table.rows.push_back(row("p" + std::to_string(p), t, "s" + std::to_string(s), y,
                                 y + noise(rng)));
      }
  EvalOptions opts;
  opts.bootstrap_samples = 200;
  opts.seed = 4;
  const auto report = evaluate_tables(table, opts);
  CHECK(report.cross_sectional.icc31.point > 0.9);
  CHECK(report.cross_sectional.icc31.lo <= report.cross_sectional.icc31.point);
  CHECK(report.cross_sectional.icc31.hi >= report.cross_sectional.icc31.point);
  CHECK(report.longitudinal.n == 12 * 2);
  CHECK(report.error_corr_valid);
  CHECK(report.n_patients == 12);

  const std::string json_text = report_to_json(report);
  for (const char* key : {"icc31", "icc21", "rmse", "mae", "pearson", "\"c\"",
                          "mse_delta_empirical", "mse_delta_model", "ttest"})
    CHECK(json_text.find(key) != std::string::npos);
}
