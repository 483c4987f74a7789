#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chronocon/cohort.hpp"
#include "chronocon/config.hpp"

namespace chronocon {

// Generator for longitudinal cohorts with monotone, nonlinearly progressing
// latent severity. Severity follows a piecewise-constant jump process
// (exponential inter-jump times, gamma jump magnitudes) sampled at irregular
// per-patient visit times, so absolute time gaps carry no severity metric.
struct CohortConfig {
  int n_patients = 200;
  int rois_per_patient = 3;     // independent trajectories per patient; one score type per roi
  int feature_dim = 32;
  int severity_dims = 4;        // feature directions carrying severity
  int label_max = 8;            // ordinal range [0, K]

  // Visit-count distribution: weights for counts visits_min, visits_min+1, ...
  // The default has median 4 and IQR [3,5].
  int visits_min = 2;
  std::vector<double> visit_weights = {0.10, 0.22, 0.33, 0.22, 0.09, 0.04};

  double horizon = 10.0;        // visit times are uniform on [0, horizon]
  double jump_rate = 0.5;       // expected severity jumps per unit time
  double jump_shape = 1.5;      // gamma(shape, scale) jump magnitudes
  double jump_scale = 0.8;
  double initial_severity_max = 1.5;  // s(0) ~ U[0, this]

  double severity_scale = 0.08;  // feature-space displacement per unit severity
  double offset_scale = 0.04;    // per-dim std of the patient nuisance offset
  double noise_sigma = 0.01;     // i.i.d. feature noise
  double reader_noise_prob = 0.1;  // chance of a +-1 label perturbation

  std::uint64_t seed = 0;

  static CohortConfig from_config(const Config& cfg);
  void validate() const;  // throws std::invalid_argument
};

struct LatentTrajectory {
  std::string group_id;
  std::vector<double> visit_times;  // strictly increasing
  std::vector<double> severity;     // nondecreasing, aligned with visit_times
};

struct GeneratedCohort {
  Cohort cohort;
  std::map<std::string, LatentTrajectory> trajectories;
};

GeneratedCohort generate(const CohortConfig& config);

// Oracle access for tests: latent severity of a group at one of its visit
// times. Throws std::runtime_error for unknown groups or visit times.
double true_severity(const std::map<std::string, LatentTrajectory>& trajectories,
                     const std::string& group_id, double timestamp);

// Truth file schema: group_id,timestamp,severity
void save_trajectories(const std::map<std::string, LatentTrajectory>& trajectories,
                       const std::string& path);
std::map<std::string, LatentTrajectory> load_trajectories(const std::string& path);

}  // namespace chronocon
