#include "chronocon/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "chronocon/csv.hpp"
#include "chronocon/rng.hpp"
#include "chronocon/stats.hpp"

namespace chronocon {

using nlohmann::json;

void ScoreTable::validate() const {
  std::set<std::tuple<std::string, double, std::string>> keys;
  for (const auto& r : rows) {
    if (!keys.insert({r.patient, r.timestamp, r.score_name}).second) {
      throw std::runtime_error("ScoreTable: duplicate row for (" + r.patient + ", t=" +
                               csv::format_double(r.timestamp) + ", " + r.score_name + ")");
    }
  }
}

namespace {

std::string table_header(bool truth) {
  return truth ? "sample_id,patient,timestamp,score_name,y_true"
               : "sample_id,patient,timestamp,score_name,y_pred";
}

void save_table(const ScoreTable& table, const std::string& path, bool truth) {
  std::ostringstream out;
  out << table_header(truth) << "\n";
  for (const auto& r : table.rows) {
    out << r.sample_id << ',' << r.patient << ',' << csv::format_double(r.timestamp) << ','
        << r.score_name << ',';
    if (truth) {
      if (r.y_true) out << csv::format_double(*r.y_true);
    } else {
      out << csv::format_double(r.y_pred);
    }
    out << "\n";
  }
  csv::write_file(path, out.str());
}

struct RawRow {
  std::int64_t sample_id;
  std::string patient;
  double timestamp;
  std::string score_name;
  std::optional<double> value;
};

std::vector<RawRow> load_table(const std::string& path, bool truth) {
  const std::string text = csv::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) != csv::split_line(table_header(truth)))
    throw std::runtime_error(path + ": expected header '" + table_header(truth) + "'");
  std::vector<RawRow> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != 5) throw std::runtime_error(where + ": expected 5 fields");
    RawRow r;
    r.sample_id = csv::parse_int(f[0], where + " sample_id");
    r.patient = f[1];
    r.timestamp = csv::parse_double(f[2], where + " timestamp");
    r.score_name = f[3];
    if (f[4].empty()) {
      if (!truth) throw std::runtime_error(where + ": missing y_pred");
      r.value = std::nullopt;
    } else {
      r.value = csv::parse_double(f[4], where + " value");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

void save_pred_table(const ScoreTable& table, const std::string& path) {
  save_table(table, path, false);
}

void save_truth_table(const ScoreTable& table, const std::string& path) {
  save_table(table, path, true);
}

ScoreTable load_joined_tables(const std::string& pred_path, const std::string& truth_path) {
  const auto preds = load_table(pred_path, false);
  const auto truths = load_table(truth_path, true);
  std::map<std::pair<std::int64_t, std::string>, const RawRow*> pred_by_key;
  for (const auto& p : preds) {
    if (!pred_by_key.insert({{p.sample_id, p.score_name}, &p}).second)
      throw std::runtime_error(pred_path + ": duplicate prediction for (sample " +
                               std::to_string(p.sample_id) + ", " + p.score_name + ")");
  }
  ScoreTable table;
  for (const auto& t : truths) {
    auto it = pred_by_key.find({t.sample_id, t.score_name});
    if (it == pred_by_key.end())
      throw std::runtime_error(truth_path + ": no prediction for (sample " +
                               std::to_string(t.sample_id) + ", " + t.score_name + ")");
    ScoreRow r;
    r.sample_id = t.sample_id;
    r.patient = t.patient;
    r.timestamp = t.timestamp;
    r.score_name = t.score_name;
    r.y_true = t.value;
    r.y_pred = *it->second->value;
    table.rows.push_back(std::move(r));
  }
  table.validate();
  return table;
}

namespace {

// Fills missing entries of `values` (aligned with sorted `times`) by linear
// interpolation between the nearest present neighbors, constant at the ends.
// Returns false when the series is entirely missing.
bool interpolate_series(const std::vector<double>& times,
                        std::vector<std::optional<double>>& values) {
  const int n = static_cast<int>(values.size());
  std::vector<int> present;
  for (int i = 0; i < n; ++i)
    if (values[i]) present.push_back(i);
  if (present.empty()) return false;
  for (int i = 0; i < n; ++i) {
    if (values[i]) continue;
    auto next = std::lower_bound(present.begin(), present.end(), i);
    if (next == present.begin()) {
      values[i] = *values[present.front()];
    } else if (next == present.end()) {
      values[i] = *values[present.back()];
    } else {
      const int hi = *next, lo = *(next - 1);
      const double w = (times[i] - times[lo]) / (times[hi] - times[lo]);
      values[i] = *values[lo] + w * (*values[hi] - *values[lo]);
    }
  }
  return true;
}

}  // namespace

TotalsTable aggregate_total(const ScoreTable& table,
                            const std::map<std::string, double>& clip_max,
                            double max_missing_frac) {
  table.validate();
  TotalsTable out;

  std::map<std::string, std::vector<const ScoreRow*>> by_patient;
  for (const auto& r : table.rows) by_patient[r.patient].push_back(&r);

  for (const auto& [patient, rows] : by_patient) {
    std::set<double> time_set;
    std::set<std::string> score_set;
    for (const auto* r : rows) {
      time_set.insert(r->timestamp);
      score_set.insert(r->score_name);
    }
    const std::vector<double> times(time_set.begin(), time_set.end());
    const int n_visits = static_cast<int>(times.size());
    auto visit_of = [&](double t) {
      return static_cast<int>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    };

    std::vector<double> total_true(n_visits, 0.0), total_pred(n_visits, 0.0);
    std::vector<int> missing_count(n_visits, 0);

    for (const auto& score : score_set) {
      std::vector<std::optional<double>> tru(n_visits), pred(n_visits);
      for (const auto* r : rows) {
        if (r->score_name != score) continue;
        const int v = visit_of(r->timestamp);
        tru[v] = r->y_true;
        double p = r->y_pred;
        auto it = clip_max.find(score);
        if (it != clip_max.end()) p = std::clamp(p, 0.0, it->second);
        pred[v] = p;
      }
      for (int v = 0; v < n_visits; ++v)
        if (!tru[v]) ++missing_count[v];

      if (!interpolate_series(times, tru)) {
        out.warnings.push_back("patient " + patient + " score " + score +
                               ": entirely missing true series, contributes 0");
        std::fill(tru.begin(), tru.end(), std::optional<double>(0.0));
      }
      if (!interpolate_series(times, pred)) {
        out.warnings.push_back("patient " + patient + " score " + score +
                               ": no predictions, contributes 0");
        std::fill(pred.begin(), pred.end(), std::optional<double>(0.0));
      }
      for (int v = 0; v < n_visits; ++v) {
        total_true[v] += *tru[v];
        total_pred[v] += *pred[v];
      }
    }

    const double n_scores = static_cast<double>(score_set.size());
    for (int v = 0; v < n_visits; ++v) {
      if (missing_count[v] / n_scores > max_missing_frac) continue;  // excluded visit
      out.rows.push_back({patient, times[v], total_true[v], total_pred[v]});
    }
  }
  return out;
}

std::vector<DeltaRow> progression(const TotalsTable& totals) {
  std::vector<DeltaRow> out;
  std::map<std::string, std::vector<const TotalsRow*>> by_patient;
  for (const auto& r : totals.rows) by_patient[r.patient].push_back(&r);
  for (auto& [patient, rows] : by_patient) {
    std::sort(rows.begin(), rows.end(), [](const TotalsRow* a, const TotalsRow* b) {
      return a->timestamp < b->timestamp;
    });
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
      out.push_back({patient, rows[i]->timestamp, rows[i + 1]->timestamp,
                     rows[i + 1]->total_true - rows[i]->total_true,
                     rows[i + 1]->total_pred - rows[i]->total_pred});
    }
  }
  return out;
}

IccResult icc(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("icc: size mismatch");
  const int n = static_cast<int>(y_true.size());
  if (n < 3) throw std::invalid_argument("icc: need at least 3 pairs");
  constexpr double k = 2.0;

  double grand = 0.0;
  for (int i = 0; i < n; ++i) grand += y_true[i] + y_pred[i];
  grand /= k * n;

  double ss_total = 0.0, ss_subject = 0.0;
  for (int i = 0; i < n; ++i) {
    ss_total += (y_true[i] - grand) * (y_true[i] - grand) +
                (y_pred[i] - grand) * (y_pred[i] - grand);
    const double row_mean = 0.5 * (y_true[i] + y_pred[i]);
    ss_subject += k * (row_mean - grand) * (row_mean - grand);
  }
  if (ss_total == 0.0) throw std::invalid_argument("icc: zero total variance");

  const double mean_true = stats::mean(y_true), mean_pred = stats::mean(y_pred);
  const double ss_rater = n * ((mean_true - grand) * (mean_true - grand) +
                               (mean_pred - grand) * (mean_pred - grand));
  const double ss_err = std::max(0.0, ss_total - ss_subject - ss_rater);

  const double bms = ss_subject / (n - 1);
  const double jms = ss_rater / (k - 1);
  const double ems = ss_err / ((n - 1) * (k - 1));

  IccResult out;
  if (bms <= 0.0) {  // zero between-subject variance
    out.degenerate = true;
    return out;
  }
  out.icc31 = (bms - ems) / (bms + (k - 1) * ems);
  out.icc21 = (bms - ems) / (bms + (k - 1) * ems + k * (jms - ems) / n);
  return out;
}

double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("rmse: size mismatch");
  if (y_true.empty()) throw std::invalid_argument("rmse: empty input");
  double ss = 0.0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_pred[i] - y_true[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(y_true.size()));
}

double mae(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("mae: size mismatch");
  if (y_true.empty()) throw std::invalid_argument("mae: empty input");
  double s = 0.0;
  for (size_t i = 0; i < y_true.size(); ++i) s += std::fabs(y_pred[i] - y_true[i]);
  return s / static_cast<double>(y_true.size());
}

namespace {

int bootstrap_threads() {
  if (const char* env = std::getenv("CHRONOCON_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 4u));
}

}  // namespace

std::vector<std::pair<double, double>> bootstrap_ci_multi(
    const std::vector<std::vector<int>>& clusters,
    const std::function<std::vector<double>(const std::vector<int>&)>& statistic,
    int n_statistics, int B, std::uint64_t seed) {
  if (B < 100) throw std::invalid_argument("bootstrap: B must be >= 100");
  if (clusters.empty()) throw std::invalid_argument("bootstrap: no clusters");

  const int max_redraws = B / 10;
  std::atomic<int> redraws{0};
  std::atomic<bool> failed{false};
  std::vector<std::vector<double>> results(B);

  auto run_one = [&](int b) {
    // Redraw (with a chained seed) when the statistic is undefined on the
    // resample; give up past the global cap.
    for (std::uint64_t attempt = 0;; ++attempt) {
      auto rng = make_rng(seed, 0xb007, static_cast<std::uint64_t>(b), attempt);
      std::uniform_int_distribution<size_t> pick(0, clusters.size() - 1);
      std::vector<int> rows;
      for (size_t c = 0; c < clusters.size(); ++c) {
        const auto& cl = clusters[pick(rng)];
        rows.insert(rows.end(), cl.begin(), cl.end());
      }
      std::vector<double> value;
      bool ok = true;
      try {
        value = statistic(rows);
        for (double v : value)
          if (!std::isfinite(v)) ok = false;
        if (static_cast<int>(value.size()) != n_statistics) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
      if (ok) {
        results[b] = std::move(value);
        return;
      }
      if (redraws.fetch_add(1) + 1 > max_redraws) {
        failed = true;
        return;
      }
    }
  };

  const int n_threads = std::min(bootstrap_threads(), B);
  if (n_threads <= 1) {
    for (int b = 0; b < B && !failed; ++b) run_one(b);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < B && !failed; b = next.fetch_add(1)) run_one(b);
      });
    }
    for (auto& th : pool) th.join();
  }
  if (failed)
    throw std::runtime_error("bootstrap: statistic undefined on more than 10% of resamples");

  std::vector<std::pair<double, double>> out(n_statistics);
  for (int s = 0; s < n_statistics; ++s) {
    std::vector<double> values(B);
    for (int b = 0; b < B; ++b) values[b] = results[b][s];
    std::sort(values.begin(), values.end());
    out[s] = {stats::quantile_sorted(values, 0.025), stats::quantile_sorted(values, 0.975)};
  }
  return out;
}

std::pair<double, double> bootstrap_ci(
    const std::vector<std::vector<int>>& clusters,
    const std::function<double(const std::vector<int>&)>& statistic, int B,
    std::uint64_t seed) {
  auto multi = bootstrap_ci_multi(
      clusters,
      [&](const std::vector<int>& rows) { return std::vector<double>{statistic(rows)}; }, 1,
      B, seed);
  return multi[0];
}

TTestResult paired_mse_ttest(const std::vector<double>& errors_a,
                             const std::vector<double>& errors_b) {
  if (errors_a.size() != errors_b.size())
    throw std::invalid_argument("paired_mse_ttest: size mismatch");
  const long n = static_cast<long>(errors_a.size());
  if (n < 2) throw std::invalid_argument("paired_mse_ttest: need n >= 2");

  std::vector<double> d(errors_a.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = errors_a[i] - errors_b[i];
  const double m = stats::mean(d);
  const double var = stats::sample_variance(d);

  TTestResult out;
  out.n = n;
  if (var == 0.0) {
    out.degenerate = true;
    if (m == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = m > 0 ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    return out;
  }
  out.t = m / std::sqrt(var / static_cast<double>(n));
  out.p = stats::student_t_two_sided_p(out.t, static_cast<double>(n - 1));
  return out;
}

ErrorCorrelation error_correlation(
    const std::vector<std::vector<double>>& errors_per_patient) {
  double sq_sum = 0.0;
  long n_err = 0;
  double cross_sum = 0.0;
  long n_cross = 0;
  double delta_sq = 0.0;
  long n_delta = 0;
  for (const auto& eps : errors_per_patient) {
    if (eps.size() < 2) continue;
    for (double e : eps) {
      sq_sum += e * e;
      ++n_err;
    }
    for (size_t i = 0; i < eps.size(); ++i)
      for (size_t j = i + 1; j < eps.size(); ++j) {
        cross_sum += eps[i] * eps[j];
        ++n_cross;
      }
    for (size_t i = 0; i + 1 < eps.size(); ++i) {
      const double d = eps[i + 1] - eps[i];
      delta_sq += d * d;
      ++n_delta;
    }
  }
  if (n_err == 0)
    throw std::invalid_argument("error_correlation: no patient has >= 2 visits");

  ErrorCorrelation out;
  out.sigma2 = sq_sum / static_cast<double>(n_err);
  out.c = out.sigma2 > 0 ? (cross_sum / static_cast<double>(n_cross)) / out.sigma2 : 0.0;
  out.mse_delta_empirical = delta_sq / static_cast<double>(n_delta);
  out.mse_delta_model = 2.0 * out.sigma2 * (1.0 - out.c);
  return out;
}

namespace {

SectionReport section_metrics(const std::vector<double>& y_true,
                              const std::vector<double>& y_pred,
                              const std::vector<std::string>& patients,
                              const EvalOptions& opts) {
  SectionReport sec;
  sec.n = static_cast<long>(y_true.size());
  const IccResult point_icc = icc(y_true, y_pred);
  sec.icc_degenerate = point_icc.degenerate;
  sec.icc31.point = point_icc.icc31;
  sec.icc21.point = point_icc.icc21;
  sec.rmse.point = rmse(y_true, y_pred);
  sec.mae.point = mae(y_true, y_pred);
  sec.pearson.point = stats::pearson(y_true, y_pred);

  // Clusters: whole patients by default, single rows otherwise.
  std::vector<std::vector<int>> clusters;
  if (opts.cluster_by_patient) {
    std::map<std::string, std::vector<int>> by_patient;
    for (size_t i = 0; i < patients.size(); ++i)
      by_patient[patients[i]].push_back(static_cast<int>(i));
    for (auto& [p, rows] : by_patient) clusters.push_back(std::move(rows));
  } else {
    for (size_t i = 0; i < patients.size(); ++i) clusters.push_back({static_cast<int>(i)});
  }

  auto stat = [&](const std::vector<int>& rows) {
    std::vector<double> t, p;
    t.reserve(rows.size());
    p.reserve(rows.size());
    for (int r : rows) {
      t.push_back(y_true[r]);
      p.push_back(y_pred[r]);
    }
    const IccResult ic = icc(t, p);
    return std::vector<double>{ic.icc31, ic.icc21, rmse(t, p), mae(t, p),
                               stats::pearson(t, p)};
  };
  const auto cis = bootstrap_ci_multi(clusters, stat, 5, opts.bootstrap_samples, opts.seed);
  MetricCi* slots[5] = {&sec.icc31, &sec.icc21, &sec.rmse, &sec.mae, &sec.pearson};
  for (int s = 0; s < 5; ++s) {
    slots[s]->lo = std::min(cis[s].first, slots[s]->point);
    slots[s]->hi = std::max(cis[s].second, slots[s]->point);
  }
  return sec;
}

}  // namespace

EvalReport evaluate_tables(const ScoreTable& table, const EvalOptions& opts) {
  EvalReport report;
  TotalsTable totals = aggregate_total(table, opts.clip_max, opts.max_missing_frac);
  report.warnings = totals.warnings;
  if (totals.rows.size() < 3)
    throw std::runtime_error("evaluate: fewer than 3 retained visits");

  std::vector<double> cs_true, cs_pred;
  std::vector<std::string> cs_patient;
  std::set<std::string> patients;
  for (const auto& r : totals.rows) {
    cs_true.push_back(r.total_true);
    cs_pred.push_back(r.total_pred);
    cs_patient.push_back(r.patient);
    patients.insert(r.patient);
  }
  report.n_patients = static_cast<long>(patients.size());
  report.cross_sectional =
      section_metrics(cs_true, cs_pred, cs_patient, opts);

  const auto deltas = progression(totals);
  if (deltas.size() >= 3) {
    std::vector<double> d_true, d_pred;
    std::vector<std::string> d_patient;
    for (const auto& d : deltas) {
      d_true.push_back(d.d_true);
      d_pred.push_back(d.d_pred);
      d_patient.push_back(d.patient);
    }
    report.longitudinal = section_metrics(d_true, d_pred, d_patient, opts);
  }

  // Error-correlation decomposition over per-patient total-score errors.
  std::map<std::string, std::vector<double>> errs;
  for (const auto& r : totals.rows) errs[r.patient].push_back(r.total_pred - r.total_true);
  std::vector<std::vector<double>> per_patient;
  for (auto& [p, es] : errs)
    if (es.size() >= 2) per_patient.push_back(std::move(es));
  if (!per_patient.empty()) {
    report.error_corr = error_correlation(per_patient);
    report.error_corr_valid = true;
  }
  return report;
}

namespace {

json ci_json(const MetricCi& m) {
  return json{{"point", m.point}, {"lo", m.lo}, {"hi", m.hi}};
}

json section_json(const SectionReport& s) {
  return json{{"icc31", ci_json(s.icc31)}, {"icc21", ci_json(s.icc21)},
              {"rmse", ci_json(s.rmse)},   {"mae", ci_json(s.mae)},
              {"pearson", ci_json(s.pearson)}, {"icc_degenerate", s.icc_degenerate},
              {"n", s.n}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["cross_sectional"] = section_json(report.cross_sectional);
  j["longitudinal"] = section_json(report.longitudinal);
  if (report.error_corr_valid) {
    j["c"] = report.error_corr.c;
    j["sigma2"] = report.error_corr.sigma2;
    j["mse_delta_empirical"] = report.error_corr.mse_delta_empirical;
    j["mse_delta_model"] = report.error_corr.mse_delta_model;
  } else {
    j["c"] = nullptr;
    j["sigma2"] = nullptr;
    j["mse_delta_empirical"] = nullptr;
    j["mse_delta_model"] = nullptr;
  }
  if (report.ttest) {
    j["ttest"] = json{{"t", report.ttest->t},
                      {"p", report.ttest->p},
                      {"n", report.ttest->n},
                      {"degenerate", report.ttest->degenerate}};
  } else {
    j["ttest"] = nullptr;
  }
  j["n_patients"] = report.n_patients;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

}  // namespace chronocon
