#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chronocon {

// One scored (patient, visit, score type) cell. y_true may be MISSING
// (e.g. "not scoreable" readings); predictions are always present.
struct ScoreRow {
  std::int64_t sample_id = -1;
  std::string patient;
  double timestamp = 0.0;
  std::string score_name;
  std::optional<double> y_true;
  double y_pred = 0.0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  // Throws on duplicate (patient, timestamp, score_name) keys.
  void validate() const;
};

// Prediction table CSV: sample_id,patient,timestamp,score_name,y_pred
// Truth table CSV:      sample_id,patient,timestamp,score_name,y_true
// (empty y_true = MISSING). Joining happens on (patient, timestamp,
// score_name); prediction rows without a matching truth row are dropped.
void save_pred_table(const ScoreTable& table, const std::string& path);
void save_truth_table(const ScoreTable& table, const std::string& path);
ScoreTable load_joined_tables(const std::string& pred_path, const std::string& truth_path);

struct TotalsRow {
  std::string patient;
  double timestamp = 0.0;
  double total_true = 0.0;
  double total_pred = 0.0;
};

struct TotalsTable {
  std::vector<TotalsRow> rows;  // sorted by (patient, timestamp)
  std::vector<std::string> warnings;
};

// Per-(patient, visit) total scores. Predicted subscores are clipped to
// [0, clip_max[score]] before summation; missing true subscores are filled
// by linear interpolation over the patient's visit timestamps (constant
// extrapolation at the ends); visits with more than `max_missing_frac`
// missing subscores are dropped; an entirely missing series contributes 0
// with a warning.
TotalsTable aggregate_total(const ScoreTable& table,
                            const std::map<std::string, double>& clip_max,
                            double max_missing_frac = 0.25);

struct DeltaRow {
  std::string patient;
  double t1 = 0.0, t2 = 0.0;
  double d_true = 0.0, d_pred = 0.0;
};

// Differences between consecutive chronological visits of each patient.
std::vector<DeltaRow> progression(const TotalsTable& totals);

struct IccResult {
  double icc31 = 0.0;  // two-way, single rating, consistency
  double icc21 = 0.0;  // two-way, single rating, absolute agreement
  bool degenerate = false;  // zero between-subject variance
};

// Shrout-Fleiss single-rating ICCs from the two-way ANOVA mean squares with
// k = 2 raters (truth, prediction). Requires n >= 3 pairs and nonzero total
// variance.
IccResult icc(const std::vector<double>& y_true, const std::vector<double>& y_pred);

double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred);
double mae(const std::vector<double>& y_true, const std::vector<double>& y_pred);

// Percentile bootstrap over clusters (whole patients when clustering is on;
// singletons otherwise). The statistic receives the concatenated row indices
// of the resampled clusters; a resample on which it throws or returns
// non-finite is redrawn, capped at 10% of B redraws. Statistics are computed
// jointly per resample; returns one (lo, hi) pair per statistic entry.
// Resamples use per-index derived seeds and may be evaluated in parallel
// (capped by CHRONOCON_THREADS) without changing the result.
std::vector<std::pair<double, double>> bootstrap_ci_multi(
    const std::vector<std::vector<int>>& clusters,
    const std::function<std::vector<double>(const std::vector<int>&)>& statistic,
    int n_statistics, int B, std::uint64_t seed);

// Convenience single-statistic wrapper.
std::pair<double, double> bootstrap_ci(
    const std::vector<std::vector<int>>& clusters,
    const std::function<double(const std::vector<int>&)>& statistic, int B,
    std::uint64_t seed);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  long n = 0;
  bool degenerate = false;  // zero variance of the paired differences
};

// Two-sided paired t-test on per-instance squared errors; p comes from the
// Student-t CDF via the regularized incomplete beta function.
TTestResult paired_mse_ttest(const std::vector<double>& errors_a,
                             const std::vector<double>& errors_b);

struct ErrorCorrelation {
  double sigma2 = 0.0;              // mean squared per-visit error
  double c = 0.0;                   // mean cross-visit error correlation
  double mse_delta_empirical = 0.0; // mean squared consecutive-visit error difference
  double mse_delta_model = 0.0;     // 2 sigma^2 (1 - c)
};

// Scoring-consistency decomposition over per-patient error sequences in
// chronological order; only patients with >= 2 visits are included.
ErrorCorrelation error_correlation(const std::vector<std::vector<double>>& errors_per_patient);

struct MetricCi {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct SectionReport {
  MetricCi icc31, icc21, rmse, mae, pearson;
  bool icc_degenerate = false;
  long n = 0;
};

struct EvalOptions {
  std::map<std::string, double> clip_max;
  double max_missing_frac = 0.25;
  int bootstrap_samples = 2000;
  std::uint64_t seed = 0;
  bool cluster_by_patient = true;
};

struct EvalReport {
  SectionReport cross_sectional;  // per-visit totals
  SectionReport longitudinal;     // consecutive-visit deltas
  bool error_corr_valid = false;
  ErrorCorrelation error_corr;
  std::optional<TTestResult> ttest;  // present when a comparison table is given
  long n_patients = 0;
  std::vector<std::string> warnings;
};

// Full evaluation pipeline: aggregate totals, progression deltas, metrics
// with clustered-bootstrap CIs, and the error-correlation decomposition.
EvalReport evaluate_tables(const ScoreTable& table, const EvalOptions& opts);

// Serializes with the fixed key names icc31/icc21/rmse/mae/pearson/c/
// mse_delta_empirical/mse_delta_model/ttest.
std::string report_to_json(const EvalReport& report);

}  // namespace chronocon
