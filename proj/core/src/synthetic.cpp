#include "chronocon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "chronocon/csv.hpp"
#include "chronocon/rng.hpp"

namespace chronocon {

CohortConfig CohortConfig::from_config(const Config& cfg) {
  CohortConfig c;
  c.n_patients = static_cast<int>(cfg.get_int("n_patients", c.n_patients));
  c.rois_per_patient = static_cast<int>(cfg.get_int("rois_per_patient", c.rois_per_patient));
  c.feature_dim = static_cast<int>(cfg.get_int("feature_dim", c.feature_dim));
  c.severity_dims = static_cast<int>(cfg.get_int("severity_dims", c.severity_dims));
  c.label_max = static_cast<int>(cfg.get_int("label_max", c.label_max));
  c.visits_min = static_cast<int>(cfg.get_int("visits_min", c.visits_min));
  c.visit_weights = cfg.get_double_list("visit_weights", c.visit_weights);
  c.horizon = cfg.get_double("horizon", c.horizon);
  c.jump_rate = cfg.get_double("jump_rate", c.jump_rate);
  c.jump_shape = cfg.get_double("jump_shape", c.jump_shape);
  c.jump_scale = cfg.get_double("jump_scale", c.jump_scale);
  c.initial_severity_max = cfg.get_double("initial_severity_max", c.initial_severity_max);
  c.severity_scale = cfg.get_double("severity_scale", c.severity_scale);
  c.offset_scale = cfg.get_double("offset_scale", c.offset_scale);
  c.noise_sigma = cfg.get_double("noise_sigma", c.noise_sigma);
  c.reader_noise_prob = cfg.get_double("reader_noise_prob", c.reader_noise_prob);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void CohortConfig::validate() const {
  if (n_patients < 0) throw std::invalid_argument("n_patients < 0");
  if (rois_per_patient < 1) throw std::invalid_argument("rois_per_patient < 1");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim < 1");
  if (severity_dims < 1 || severity_dims > feature_dim)
    throw std::invalid_argument("severity_dims must be in [1, feature_dim]");
  if (label_max < 0) throw std::invalid_argument("label_max < 0");
  if (visits_min < 1) throw std::invalid_argument("visits_min < 1");
  if (visit_weights.empty()) throw std::invalid_argument("visit_weights empty");
  for (double w : visit_weights)
    if (!(w >= 0)) throw std::invalid_argument("negative visit weight");
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be > 0");
  if (jump_rate < 0 || noise_sigma < 0 || offset_scale < 0 || severity_scale < 0)
    throw std::invalid_argument("rates and scales must be nonnegative");
  if (!(jump_shape > 0) || !(jump_scale > 0))
    throw std::invalid_argument("gamma jump parameters must be positive");
  if (initial_severity_max < 0) throw std::invalid_argument("initial_severity_max < 0");
  if (reader_noise_prob < 0 || reader_noise_prob > 1)
    throw std::invalid_argument("reader_noise_prob outside [0,1]");
}

namespace {

std::string patient_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%04d", i);
  return buf;
}

std::string roi_name(int r) { return "roi" + std::to_string(r); }

// Strictly increasing uniform visit times; duplicates are nudged apart.
std::vector<double> draw_visit_times(int count, double horizon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, horizon);
  std::vector<double> t(count);
  for (auto& x : t) x = uni(rng);
  std::sort(t.begin(), t.end());
  for (int i = 1; i < count; ++i)
    if (t[i] <= t[i - 1]) t[i] = std::nextafter(t[i - 1], horizon * 2.0);
  return t;
}

std::vector<double> severity_at(const std::vector<double>& visit_times, double s0,
                                double jump_rate, double jump_shape, double jump_scale,
                                double horizon, std::mt19937_64& rng) {
  // Jump process on [0, horizon]: exponential inter-arrival times, gamma
  // magnitudes. Severity at a visit is s0 plus all jumps at or before it.
  std::vector<std::pair<double, double>> jumps;
  if (jump_rate > 0) {
    std::exponential_distribution<double> gap(jump_rate);
    std::gamma_distribution<double> mag(jump_shape, jump_scale);
    double t = gap(rng);
    while (t <= horizon) {
      jumps.emplace_back(t, mag(rng));
      t += gap(rng);
    }
  }
  std::vector<double> s(visit_times.size());
  for (size_t i = 0; i < visit_times.size(); ++i) {
    double v = s0;
    for (const auto& [jt, jm] : jumps)
      if (jt <= visit_times[i]) v += jm;
    s[i] = v;
  }
  return s;
}

}  // namespace

GeneratedCohort generate(const CohortConfig& config) {
  config.validate();
  GeneratedCohort out;
  Cohort& cohort = out.cohort;
  cohort.feature_dim = config.feature_dim;
  cohort.patient_delimiter = "/";
  for (int r = 0; r < config.rois_per_patient; ++r)
    cohort.score_types.push_back({roi_name(r), config.label_max});

  // Cohort-level severity direction: unit vector restricted to the first
  // severity_dims coordinates, scaled so one unit of severity moves the
  // feature vector by severity_scale.
  std::vector<double> severity_dir(config.feature_dim, 0.0);
  {
    auto rng = make_rng(config.seed, 0xd12);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double norm2 = 0.0;
    for (int d = 0; d < config.severity_dims; ++d) {
      severity_dir[d] = gauss(rng);
      norm2 += severity_dir[d] * severity_dir[d];
    }
    const double inv = config.severity_scale / std::sqrt(norm2);
    for (int d = 0; d < config.severity_dims; ++d) severity_dir[d] *= inv;
  }

  std::discrete_distribution<int> visit_count_dist(config.visit_weights.begin(),
                                                   config.visit_weights.end());

  std::int64_t next_id = 0;
  for (int p = 0; p < config.n_patients; ++p) {
    auto rng = make_rng(config.seed, 0xaa71e47, static_cast<std::uint64_t>(p));
    const std::string patient = patient_name(p);

    const int visits = config.visits_min + visit_count_dist(rng);
    const auto times = draw_visit_times(visits, config.horizon, rng);

    // Nuisance offset lives in the coordinates orthogonal to the severity
    // span; within-group contrast cancels it exactly.
    std::vector<double> offset(config.feature_dim, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int d = config.severity_dims; d < config.feature_dim; ++d)
      offset[d] = config.offset_scale * gauss(rng);

    std::uniform_real_distribution<double> s0_dist(0.0, config.initial_severity_max);
    std::uniform_real_distribution<double> uni01(0.0, 1.0);

    for (int r = 0; r < config.rois_per_patient; ++r) {
      const std::string group = patient + "/" + roi_name(r);
      const double s0 = config.initial_severity_max > 0 ? s0_dist(rng) : 0.0;
      const auto severity = severity_at(times, s0, config.jump_rate, config.jump_shape,
                                        config.jump_scale, config.horizon, rng);
      LatentTrajectory traj{group, times, severity};

      for (int v = 0; v < visits; ++v) {
        Sample s;
        s.sample_id = next_id++;
        s.group_id = group;
        s.timestamp = times[v];
        s.view_id = 0;
        s.features.resize(config.feature_dim);
        for (int d = 0; d < config.feature_dim; ++d) {
          double x = severity[v] * severity_dir[d] + offset[d];
          if (config.noise_sigma > 0) x += config.noise_sigma * gauss(rng);
          s.features[d] = x;
        }
        int label = static_cast<int>(std::llround(severity[v]));
        label = std::clamp(label, 0, config.label_max);
        if (config.reader_noise_prob > 0 && uni01(rng) < config.reader_noise_prob) {
          label += uni01(rng) < 0.5 ? -1 : 1;
          label = std::clamp(label, 0, config.label_max);
        }
        s.labels[roi_name(r)] = label;
        cohort.samples.push_back(std::move(s));
      }
      out.trajectories.emplace(group, std::move(traj));
    }
  }

  validate_cohort(cohort);
  return out;
}

double true_severity(const std::map<std::string, LatentTrajectory>& trajectories,
                     const std::string& group_id, double timestamp) {
  auto it = trajectories.find(group_id);
  if (it == trajectories.end())
    throw std::runtime_error("true_severity: unknown group '" + group_id + "'");
  const auto& traj = it->second;
  for (size_t i = 0; i < traj.visit_times.size(); ++i)
    if (traj.visit_times[i] == timestamp) return traj.severity[i];
  throw std::runtime_error("true_severity: " + group_id + " has no visit at t=" +
                           csv::format_double(timestamp));
}

void save_trajectories(const std::map<std::string, LatentTrajectory>& trajectories,
                       const std::string& path) {
  std::ostringstream out;
  out << "group_id,timestamp,severity\n";
  for (const auto& [group, traj] : trajectories)
    for (size_t i = 0; i < traj.visit_times.size(); ++i)
      out << group << ',' << csv::format_double(traj.visit_times[i]) << ','
          << csv::format_double(traj.severity[i]) << "\n";
  csv::write_file(path, out.str());
}

std::map<std::string, LatentTrajectory> load_trajectories(const std::string& path) {
  const std::string text = csv::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || csv::split_line(line) !=
      std::vector<std::string>{"group_id", "timestamp", "severity"})
    throw std::runtime_error(path + ": bad truth header");
  std::map<std::string, LatentTrajectory> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != 3) throw std::runtime_error(where + ": expected 3 fields");
    auto& traj = out[f[0]];
    traj.group_id = f[0];
    traj.visit_times.push_back(csv::parse_double(f[1], where + " timestamp"));
    traj.severity.push_back(csv::parse_double(f[2], where + " severity"));
  }
  return out;
}

}  // namespace chronocon
