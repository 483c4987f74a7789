#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chronocon {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ScoreType {
  std::string name;
  int max_value = 0;  // ordinal range is [0, max_value]
  bool operator==(const ScoreType&) const = default;
};

// One observation: a feature vector tied to a group (patient/side/joint
// style hierarchical id), a visit timestamp, and optional ordinal labels.
// A label key that is absent means MISSING; on disk this is an empty field.
struct Sample {
  std::int64_t sample_id = 0;
  std::string group_id;
  double timestamp = 0.0;
  int view_id = 0;  // 0 = original observation, >0 = augmented view
  std::vector<double> features;
  std::map<std::string, int> labels;

  bool operator==(const Sample&) const = default;
};

struct Cohort {
  std::vector<Sample> samples;
  std::vector<ScoreType> score_types;
  std::map<std::string, Split> split_assignment;  // patient root -> split
  int feature_dim = 0;
  std::string patient_delimiter = "/";

  bool operator==(const Cohort&) const = default;

  const ScoreType* find_score_type(const std::string& name) const;
};

// Patient root = group_id prefix up to the first delimiter (whole id when
// the delimiter does not occur).
std::string patient_root(const std::string& group_id, const std::string& delimiter = "/");

// Sorted unique patient roots over all samples.
std::vector<std::string> cohort_patients(const Cohort& cohort);

// Indices of samples whose patient root is assigned to `split`.
std::vector<int> split_sample_indices(const Cohort& cohort, Split split);

// Throws std::runtime_error naming the offending sample on any invariant
// violation (non-finite values, wrong dimension, label out of range,
// duplicate sample ids, malformed group ids).
void validate_cohort(const Cohort& cohort);

// Dataset file format: UTF-8 CSV with header
//   sample_id,group_id,timestamp,view_id,label:<name>...,f0..f{D-1}
// MISSING label = empty field; floats use 17 significant digits.
// Split assignment and score maxima live in a sidecar `<path>.meta.json`
// (the CSV header has no room for them); both files are byte-stable.
Cohort load_cohort(const std::string& path);
void save_cohort(const Cohort& cohort, const std::string& path);

// Assigns each patient root to train/val/test by seeded shuffle.
// `fractions` must sum to 1 within 1e-9. Every split with a nonzero
// fraction receives at least one patient or the call throws.
Cohort split_patients(const Cohort& cohort, double train_frac, double val_frac,
                      double test_frac, std::uint64_t seed);

// Keeps labels for `n_labeled` seeded-random train patients and masks all
// other train labels to MISSING. Val/test samples are untouched.
Cohort subsample_labeled_patients(const Cohort& cohort, int n_labeled, std::uint64_t seed);

}  // namespace chronocon
