#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chronocon/cohort.hpp"
#include "chronocon/metrics.hpp"
#include "chronocon/mlp.hpp"
#include "chronocon/train.hpp"

namespace chronocon {

// Rows for the prediction table: every sample x score type, raw head outputs.
std::vector<ScoreRow> prediction_rows(const Cohort& cohort,
                                      const std::vector<Prediction>& predictions,
                                      std::optional<Split> split);

// Rows for the truth table: one row per present label.
std::vector<ScoreRow> truth_rows(const Cohort& cohort, std::optional<Split> split);

// Joined evaluation table (present labels only) for one split.
ScoreTable build_score_table(const Cohort& cohort,
                             const std::vector<Prediction>& predictions,
                             std::optional<Split> split);

// Per-score clip bounds from the cohort's ordinal ranges.
std::map<std::string, double> clip_map(const Cohort& cohort);

struct SimDiffRow {
  std::string group;
  std::string patient;
  double t1 = 0.0, t2 = 0.0;
  int pair_rank = 0;  // index distance between the two visits
  int dlabel = 0;     // later label minus earlier label
  double similarity = 0.0;  // -L2 between the two embeddings
};

struct SimDiffTable {
  std::vector<SimDiffRow> rows;
  std::map<int, long> dlabel_histogram;
};

// Feature similarity between chronologically ordered within-group visit
// pairs versus their label difference. Pairs with a missing label on either
// end are skipped.
SimDiffTable similarity_vs_scorediff(const Mlp& encoder, const Cohort& cohort);

// Median similarity per dlabel value.
std::map<int, double> simdiff_bucket_medians(const SimDiffTable& table);

// Writes fig4_pca.csv, fig4_simdiff.csv and fig4_simdiff_hist.csv.
void write_embedding_analysis(const Mlp& encoder, const Cohort& cohort,
                              const std::string& out_dir);

// One sweep cell's outcome; metric fields are NaN for error cells.
struct SweepRow {
  std::string variant;
  int n_labeled = 0;
  int rep = 0;
  std::string status = "ok";  // "ok" or "error:<tag>"
  SectionReport cross, longit;
  double c = std::numeric_limits<double>::quiet_NaN();
  double mse_delta_empirical = std::numeric_limits<double>::quiet_NaN();
  double mse_delta_model = std::numeric_limits<double>::quiet_NaN();
  double best_val_mae = std::numeric_limits<double>::quiet_NaN();
};

std::string sweep_csv_header();
std::string sweep_row_to_csv(const SweepRow& row);
SweepRow sweep_row_from_csv(const std::string& line, const std::string& context);
std::vector<SweepRow> load_sweep_table(const std::string& path);

// Writes fig3_left.csv, fig3_right.csv, table2.csv and summary.md from a
// sweep table; deterministic for identical inputs.
void emit_report(const std::vector<SweepRow>& rows, const std::string& out_dir);

}  // namespace chronocon
