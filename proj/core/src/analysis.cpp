#include "chronocon/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "chronocon/csv.hpp"
#include "chronocon/losses.hpp"
#include "chronocon/pca.hpp"
#include "chronocon/stats.hpp"

namespace chronocon {

namespace {

bool in_split(const Cohort& cohort, const Sample& s, std::optional<Split> split) {
  if (!split) return true;
  const auto root = patient_root(s.group_id, cohort.patient_delimiter);
  auto it = cohort.split_assignment.find(root);
  return it != cohort.split_assignment.end() && it->second == *split;
}

}  // namespace

std::vector<ScoreRow> prediction_rows(const Cohort& cohort,
                                      const std::vector<Prediction>& predictions,
                                      std::optional<Split> split) {
  std::map<std::int64_t, const Sample*> by_id;
  for (const auto& s : cohort.samples) by_id[s.sample_id] = &s;
  std::vector<ScoreRow> rows;
  for (const auto& p : predictions) {
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end())
      throw std::runtime_error("prediction references unknown sample " +
                               std::to_string(p.sample_id));
    const Sample& s = *it->second;
    if (!in_split(cohort, s, split)) continue;
    ScoreRow r;
    r.sample_id = s.sample_id;
    r.patient = patient_root(s.group_id, cohort.patient_delimiter);
    r.timestamp = s.timestamp;
    r.score_name = p.score_name;
    r.y_pred = p.y_pred;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ScoreRow> truth_rows(const Cohort& cohort, std::optional<Split> split) {
  std::vector<ScoreRow> rows;
  for (const auto& s : cohort.samples) {
    if (s.view_id != 0 || !in_split(cohort, s, split)) continue;
    for (const auto& [name, value] : s.labels) {
      ScoreRow r;
      r.sample_id = s.sample_id;
      r.patient = patient_root(s.group_id, cohort.patient_delimiter);
      r.timestamp = s.timestamp;
      r.score_name = name;
      r.y_true = static_cast<double>(value);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

ScoreTable build_score_table(const Cohort& cohort,
                             const std::vector<Prediction>& predictions,
                             std::optional<Split> split) {
  std::map<std::pair<std::int64_t, std::string>, double> pred_by_key;
  for (const auto& p : predictions) pred_by_key[{p.sample_id, p.score_name}] = p.y_pred;
  ScoreTable table;
  for (auto& r : truth_rows(cohort, split)) {
    auto it = pred_by_key.find({r.sample_id, r.score_name});
    if (it == pred_by_key.end())
      throw std::runtime_error("no prediction for sample " + std::to_string(r.sample_id) +
                               " score " + r.score_name);
    r.y_pred = it->second;
    table.rows.push_back(std::move(r));
  }
  table.validate();
  return table;
}

std::map<std::string, double> clip_map(const Cohort& cohort) {
  std::map<std::string, double> out;
  for (const auto& st : cohort.score_types) out[st.name] = st.max_value;
  return out;
}

SimDiffTable similarity_vs_scorediff(const Mlp& encoder, const Cohort& cohort) {
  std::vector<const Sample*> view0;
  for (const auto& s : cohort.samples)
    if (s.view_id == 0) view0.push_back(&s);

  std::vector<Sample> samples;
  samples.reserve(view0.size());
  for (const auto* s : view0) samples.push_back(*s);
  SimDiffTable table;
  if (samples.empty()) return table;
  const Eigen::MatrixXd V = encoder.forward(features_matrix(samples));

  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i)
    groups[samples[i].group_id].push_back(i);

  for (auto& [group, members] : groups) {
    std::sort(members.begin(), members.end(),
              [&](int a, int b) { return samples[a].timestamp < samples[b].timestamp; });
    for (size_t i = 0; i < members.size(); ++i) {
      for (size_t j = i + 1; j < members.size(); ++j) {
        const Sample& a = samples[members[i]];
        const Sample& b = samples[members[j]];
        if (a.labels.size() != 1 || b.labels.size() != 1) continue;
        SimDiffRow row;
        row.group = group;
        row.patient = patient_root(group, cohort.patient_delimiter);
        row.t1 = a.timestamp;
        row.t2 = b.timestamp;
        row.pair_rank = static_cast<int>(j - i);
        row.dlabel = b.labels.begin()->second - a.labels.begin()->second;
        row.similarity = -(V.row(members[i]) - V.row(members[j])).norm();
        table.dlabel_histogram[row.dlabel]++;
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

std::map<int, double> simdiff_bucket_medians(const SimDiffTable& table) {
  std::map<int, std::vector<double>> buckets;
  for (const auto& r : table.rows) buckets[r.dlabel].push_back(r.similarity);
  std::map<int, double> out;
  for (auto& [d, sims] : buckets) out[d] = stats::median(sims);
  return out;
}

void write_embedding_analysis(const Mlp& encoder, const Cohort& cohort,
                              const std::string& out_dir) {
  std::vector<Sample> samples;
  for (const auto& s : cohort.samples)
    if (s.view_id == 0) samples.push_back(s);

  // PCA projection of the embedding, with per-group relative time for the
  // trajectory coloring.
  const Eigen::MatrixXd V = encoder.forward(features_matrix(samples));
  const PcaResult pca = pca_project(V, std::min<int>(2, static_cast<int>(V.cols())));

  std::map<std::string, std::pair<double, double>> group_span;
  for (const auto& s : samples) {
    auto it = group_span.find(s.group_id);
    if (it == group_span.end()) {
      group_span[s.group_id] = {s.timestamp, s.timestamp};
    } else {
      it->second.first = std::min(it->second.first, s.timestamp);
      it->second.second = std::max(it->second.second, s.timestamp);
    }
  }

  std::ostringstream pca_csv;
  pca_csv << "sample_id,patient,group_id,timestamp,rel_time,label,pc1,pc2,evr1,evr2\n";
  const int m = static_cast<int>(pca.explained_variance.size());
  const double evr1 = m > 0 ? pca.explained_variance[0] : 0.0;
  const double evr2 = m > 1 ? pca.explained_variance[1] : 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const auto [t0, t1] = group_span[s.group_id];
    const double rel = t1 > t0 ? (s.timestamp - t0) / (t1 - t0) : 0.0;
    pca_csv << s.sample_id << ',' << patient_root(s.group_id, cohort.patient_delimiter)
            << ',' << s.group_id << ',' << csv::format_double(s.timestamp) << ','
            << csv::format_double(rel) << ',';
    if (s.labels.size() == 1) pca_csv << s.labels.begin()->second;
    const auto row = static_cast<Eigen::Index>(i);
    pca_csv << ',' << csv::format_double(pca.projected(row, 0)) << ','
            << csv::format_double(m > 1 ? pca.projected(row, 1) : 0.0) << ','
            << csv::format_double(evr1) << ',' << csv::format_double(evr2) << "\n";
  }
  csv::write_file(out_dir + "/fig4_pca.csv", pca_csv.str());

  const SimDiffTable table = similarity_vs_scorediff(encoder, cohort);
  std::ostringstream sim_csv;
  sim_csv << "group,patient,t1,t2,pair_rank,dlabel,similarity\n";
  for (const auto& r : table.rows)
    sim_csv << r.group << ',' << r.patient << ',' << csv::format_double(r.t1) << ','
            << csv::format_double(r.t2) << ',' << r.pair_rank << ',' << r.dlabel << ','
            << csv::format_double(r.similarity) << "\n";
  csv::write_file(out_dir + "/fig4_simdiff.csv", sim_csv.str());

  std::ostringstream hist_csv;
  hist_csv << "dlabel,count\n";
  for (const auto& [d, count] : table.dlabel_histogram)
    hist_csv << d << ',' << count << "\n";
  csv::write_file(out_dir + "/fig4_simdiff_hist.csv", hist_csv.str());
}

namespace {

std::string ci_cols(const std::string& prefix) {
  return prefix + "," + prefix + "_lo," + prefix + "_hi";
}

void append_ci(std::ostringstream& out, const MetricCi& m) {
  out << ',' << csv::format_double(m.point) << ',' << csv::format_double(m.lo) << ','
      << csv::format_double(m.hi);
}

MetricCi read_ci(const std::vector<std::string>& f, size_t& k, const std::string& where) {
  MetricCi m;
  m.point = csv::parse_double(f[k++], where);
  m.lo = csv::parse_double(f[k++], where);
  m.hi = csv::parse_double(f[k++], where);
  return m;
}

constexpr const char* kSectionNames[2] = {"cs", "lg"};

}  // namespace

std::string sweep_csv_header() {
  std::ostringstream out;
  out << "variant,n_labeled,rep,status";
  for (const auto* sec : kSectionNames)
    for (const char* metric : {"icc31", "icc21", "rmse", "mae", "pearson"})
      out << ',' << ci_cols(std::string(sec) + "_" + metric);
  out << ",c,mse_delta_empirical,mse_delta_model,best_val_mae";
  return out.str();
}

std::string sweep_row_to_csv(const SweepRow& row) {
  std::ostringstream out;
  out << row.variant << ',' << row.n_labeled << ',' << row.rep << ',' << row.status;
  for (const SectionReport* sec : {&row.cross, &row.longit}) {
    append_ci(out, sec->icc31);
    append_ci(out, sec->icc21);
    append_ci(out, sec->rmse);
    append_ci(out, sec->mae);
    append_ci(out, sec->pearson);
  }
  out << ',' << csv::format_double(row.c) << ','
      << csv::format_double(row.mse_delta_empirical) << ','
      << csv::format_double(row.mse_delta_model) << ','
      << csv::format_double(row.best_val_mae);
  return out.str();
}

SweepRow sweep_row_from_csv(const std::string& line, const std::string& context) {
  const auto f = csv::split_line(line);
  const auto expected = csv::split_line(sweep_csv_header()).size();
  if (f.size() != expected)
    throw std::runtime_error(context + ": expected " + std::to_string(expected) +
                             " fields, got " + std::to_string(f.size()));
  SweepRow row;
  size_t k = 0;
  row.variant = f[k++];
  row.n_labeled = static_cast<int>(csv::parse_int(f[k++], context));
  row.rep = static_cast<int>(csv::parse_int(f[k++], context));
  row.status = f[k++];
  for (SectionReport* sec : {&row.cross, &row.longit}) {
    sec->icc31 = read_ci(f, k, context);
    sec->icc21 = read_ci(f, k, context);
    sec->rmse = read_ci(f, k, context);
    sec->mae = read_ci(f, k, context);
    sec->pearson = read_ci(f, k, context);
  }
  row.c = csv::parse_double(f[k++], context);
  row.mse_delta_empirical = csv::parse_double(f[k++], context);
  row.mse_delta_model = csv::parse_double(f[k++], context);
  row.best_val_mae = csv::parse_double(f[k++], context);
  return row;
}

std::vector<SweepRow> load_sweep_table(const std::string& path) {
  const std::string text = csv::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != sweep_csv_header())
    throw std::runtime_error(path + ": bad sweep table header");
  std::vector<SweepRow> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    rows.push_back(sweep_row_from_csv(line, path + ":" + std::to_string(line_no)));
  }
  return rows;
}

namespace {

struct Aggregate {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double ci_half = 0.0;  // mean bootstrap CI half-width across reps
};

Aggregate aggregate_metric(const std::vector<const SweepRow*>& rows,
                           MetricCi SectionReport::*metric, bool longitudinal) {
  std::vector<double> points;
  double half_sum = 0.0;
  for (const auto* r : rows) {
    const SectionReport& sec = longitudinal ? r->longit : r->cross;
    const MetricCi& m = sec.*metric;
    points.push_back(m.point);
    half_sum += 0.5 * (m.hi - m.lo);
  }
  Aggregate agg;
  agg.mean = stats::mean(points);
  double sd = points.size() > 1 ? std::sqrt(stats::sample_variance(points)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(points.size()));
  agg.lo = agg.mean - half;
  agg.hi = agg.mean + half;
  agg.ci_half = half_sum / static_cast<double>(rows.size());
  return agg;
}

}  // namespace

void emit_report(const std::vector<SweepRow>& rows, const std::string& out_dir) {
  // Group completed cells by (variant, n_labeled), canonical order.
  std::map<std::pair<std::string, int>, std::vector<const SweepRow*>> cells;
  long n_errors = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++n_errors;
      continue;
    }
    cells[{r.variant, r.n_labeled}].push_back(&r);
  }

  std::ostringstream left, right;
  const std::string fig_header = "variant,n_labeled,icc31_mean,icc31_lo,icc31_hi\n";
  left << fig_header;
  right << fig_header;
  for (const auto& [key, group] : cells) {
    const auto cs = aggregate_metric(group, &SectionReport::icc31, false);
    const auto lg = aggregate_metric(group, &SectionReport::icc31, true);
    left << key.first << ',' << key.second << ',' << csv::format_double(cs.mean) << ','
         << csv::format_double(cs.lo) << ',' << csv::format_double(cs.hi) << "\n";
    right << key.first << ',' << key.second << ',' << csv::format_double(lg.mean) << ','
          << csv::format_double(lg.lo) << ',' << csv::format_double(lg.hi) << "\n";
  }
  csv::write_file(out_dir + "/fig3_left.csv", left.str());
  csv::write_file(out_dir + "/fig3_right.csv", right.str());

  std::ostringstream table2;
  table2 << "variant,n_labeled,cs_rmse,cs_rmse_ci_half,cs_icc31,cs_icc31_ci_half,"
            "lg_rmse,lg_rmse_ci_half,lg_icc31,lg_icc31_ci_half\n";
  for (const auto& [key, group] : cells) {
    const auto cs_rmse = aggregate_metric(group, &SectionReport::rmse, false);
    const auto cs_icc = aggregate_metric(group, &SectionReport::icc31, false);
    const auto lg_rmse = aggregate_metric(group, &SectionReport::rmse, true);
    const auto lg_icc = aggregate_metric(group, &SectionReport::icc31, true);
    table2 << key.first << ',' << key.second << ',' << csv::format_double(cs_rmse.mean)
           << ',' << csv::format_double(cs_rmse.ci_half) << ','
           << csv::format_double(cs_icc.mean) << ',' << csv::format_double(cs_icc.ci_half)
           << ',' << csv::format_double(lg_rmse.mean) << ','
           << csv::format_double(lg_rmse.ci_half) << ',' << csv::format_double(lg_icc.mean)
           << ',' << csv::format_double(lg_icc.ci_half) << "\n";
  }
  csv::write_file(out_dir + "/table2.csv", table2.str());

  std::ostringstream md;
  md << "# Sweep summary\n\n";
  if (rows.empty()) {
    md << "Zero sweep cells.\n";
  } else {
    md << "- cells: " << rows.size() << " (" << n_errors << " failed)\n";
    md << "- grid points: " << cells.size() << "\n\n";
    md << "| variant | n_labeled | ICC(3,1) total | ICC(3,1) delta | RMSE total |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& [key, group] : cells) {
      const auto cs = aggregate_metric(group, &SectionReport::icc31, false);
      const auto lg = aggregate_metric(group, &SectionReport::icc31, true);
      const auto rm = aggregate_metric(group, &SectionReport::rmse, false);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "| %s | %d | %.3f | %.3f | %.3f |\n",
                    key.first.c_str(), key.second, cs.mean, lg.mean, rm.mean);
      md << buf;
    }
    md << "\nPlot data: fig3_left.csv (total-score ICC vs labeled patients), "
          "fig3_right.csv (progression ICC), table2.csv (RMSE/ICC with CI halves).\n";
  }
  csv::write_file(out_dir + "/summary.md", md.str());
}

}  // namespace chronocon
