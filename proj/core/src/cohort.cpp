#include "chronocon/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "chronocon/csv.hpp"
#include "chronocon/rng.hpp"

namespace chronocon {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw std::logic_error("split_name: invalid split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::runtime_error("unknown split name '" + name + "'");
}

const ScoreType* Cohort::find_score_type(const std::string& name) const {
  for (const auto& st : score_types)
    if (st.name == name) return &st;
  return nullptr;
}

std::string patient_root(const std::string& group_id, const std::string& delimiter) {
  const size_t pos = group_id.find(delimiter);
  return pos == std::string::npos ? group_id : group_id.substr(0, pos);
}

std::vector<std::string> cohort_patients(const Cohort& cohort) {
  std::set<std::string> roots;
  for (const auto& s : cohort.samples)
    roots.insert(patient_root(s.group_id, cohort.patient_delimiter));
  return {roots.begin(), roots.end()};
}

std::vector<int> split_sample_indices(const Cohort& cohort, Split split) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cohort.samples.size()); ++i) {
    const auto root = patient_root(cohort.samples[i].group_id, cohort.patient_delimiter);
    auto it = cohort.split_assignment.find(root);
    if (it != cohort.split_assignment.end() && it->second == split) out.push_back(i);
  }
  return out;
}

namespace {

std::string sample_tag(const Sample& s) {
  return "sample " + std::to_string(s.sample_id) + " (" + s.group_id + ")";
}

void check_name(const std::string& name, const std::string& what) {
  if (name.empty()) throw std::runtime_error(what + " is empty");
  if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos ||
      name.find('\r') != std::string::npos) {
    throw std::runtime_error(what + " '" + name + "' contains a comma or newline");
  }
}

}  // namespace

void validate_cohort(const Cohort& cohort) {
  std::set<std::int64_t> ids;
  for (const auto& st : cohort.score_types) {
    check_name(st.name, "score type name");
    if (st.max_value < 0)
      throw std::runtime_error("score type '" + st.name + "' has negative max");
  }
  for (const auto& s : cohort.samples) {
    check_name(s.group_id, "group_id of sample " + std::to_string(s.sample_id));
    if (!std::isfinite(s.timestamp))
      throw std::runtime_error(sample_tag(s) + ": non-finite timestamp");
    if (static_cast<int>(s.features.size()) != cohort.feature_dim)
      throw std::runtime_error(sample_tag(s) + ": expected " +
                               std::to_string(cohort.feature_dim) + " features, got " +
                               std::to_string(s.features.size()));
    for (double f : s.features)
      if (!std::isfinite(f)) throw std::runtime_error(sample_tag(s) + ": non-finite feature");
    if (!ids.insert(s.sample_id).second)
      throw std::runtime_error(sample_tag(s) + ": duplicate sample_id");
    for (const auto& [name, value] : s.labels) {
      const ScoreType* st = cohort.find_score_type(name);
      if (!st) throw std::runtime_error(sample_tag(s) + ": unknown score type '" + name + "'");
      if (value < 0 || value > st->max_value)
        throw std::runtime_error(sample_tag(s) + ": label " + name + "=" +
                                 std::to_string(value) + " outside [0," +
                                 std::to_string(st->max_value) + "]");
    }
  }
}

namespace {

std::string meta_path(const std::string& path) { return path + ".meta.json"; }

void save_meta(const Cohort& cohort, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["patient_delimiter"] = cohort.patient_delimiter;
  json types = json::array();
  for (const auto& st : cohort.score_types)
    types.push_back(json{{"name", st.name}, {"max", st.max_value}});
  j["score_types"] = std::move(types);
  json splits = json::object();
  for (const auto& [root, split] : cohort.split_assignment)
    splits[root] = split_name(split);
  j["splits"] = std::move(splits);
  csv::write_file(meta_path(path), j.dump(2) + "\n");
}

void load_meta(Cohort& cohort, const std::string& path) {
  if (!csv::file_exists(meta_path(path))) {
    // Tolerated for hand-made files: score maxima default to the largest
    // observed label so range validation stays vacuous.
    std::map<std::string, int> seen;
    for (const auto& s : cohort.samples)
      for (const auto& [name, value] : s.labels)
        seen[name] = std::max(seen[name], value);
    for (auto& st : cohort.score_types) st.max_value = seen[st.name];
    return;
  }
  json j = json::parse(csv::read_file(meta_path(path)));
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error(meta_path(path) + ": unsupported format_version");
  cohort.patient_delimiter = j.at("patient_delimiter").get<std::string>();
  std::map<std::string, int> maxes;
  for (const auto& t : j.at("score_types"))
    maxes[t.at("name").get<std::string>()] = t.at("max").get<int>();
  for (auto& st : cohort.score_types) {
    auto it = maxes.find(st.name);
    if (it == maxes.end())
      throw std::runtime_error(meta_path(path) + ": no max for score type '" + st.name + "'");
    st.max_value = it->second;
  }
  for (const auto& [root, name] : j.at("splits").items())
    cohort.split_assignment[root] = split_from_name(name.get<std::string>());
}

}  // namespace

void save_cohort(const Cohort& cohort, const std::string& path) {
  validate_cohort(cohort);
  std::ostringstream out;
  out << "sample_id,group_id,timestamp,view_id";
  for (const auto& st : cohort.score_types) out << ",label:" << st.name;
  for (int d = 0; d < cohort.feature_dim; ++d) out << ",f" << d;
  out << "\n";
  for (const auto& s : cohort.samples) {
    out << s.sample_id << ',' << s.group_id << ',' << csv::format_double(s.timestamp)
        << ',' << s.view_id;
    for (const auto& st : cohort.score_types) {
      out << ',';
      auto it = s.labels.find(st.name);
      if (it != s.labels.end()) out << it->second;
    }
    for (double f : s.features) out << ',' << csv::format_double(f);
    out << "\n";
  }
  csv::write_file(path, out.str());
  save_meta(cohort, path);
}

Cohort load_cohort(const std::string& path) {
  const std::string text = csv::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file (no header)");

  const auto header = csv::split_line(line);
  const std::vector<std::string> fixed = {"sample_id", "group_id", "timestamp", "view_id"};
  if (header.size() < fixed.size())
    throw std::runtime_error(path + ":1: header too short");
  for (size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw std::runtime_error(path + ":1: expected column '" + fixed[i] + "', got '" +
                               header[i] + "'");

  Cohort cohort;
  size_t col = fixed.size();
  while (col < header.size() && header[col].rfind("label:", 0) == 0) {
    cohort.score_types.push_back({header[col].substr(6), 0});
    ++col;
  }
  const size_t first_feature = col;
  for (int d = 0; col < header.size(); ++col, ++d) {
    if (header[col] != "f" + std::to_string(d))
      throw std::runtime_error(path + ":1: expected column 'f" + std::to_string(d) +
                               "', got '" + header[col] + "'");
  }
  cohort.feature_dim = static_cast<int>(header.size() - first_feature);

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != header.size())
      throw std::runtime_error(where + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    Sample s;
    s.sample_id = csv::parse_int(fields[0], where + " sample_id");
    s.group_id = fields[1];
    if (fields[2].empty()) throw std::runtime_error(where + ": missing timestamp");
    s.timestamp = csv::parse_double(fields[2], where + " timestamp");
    s.view_id = static_cast<int>(csv::parse_int(fields[3], where + " view_id"));
    for (size_t k = 0; k < cohort.score_types.size(); ++k) {
      const std::string& field = fields[fixed.size() + k];
      if (!field.empty()) {
        s.labels[cohort.score_types[k].name] =
            static_cast<int>(csv::parse_int(field, where + " label:" + cohort.score_types[k].name));
      }
    }
    s.features.reserve(cohort.feature_dim);
    for (size_t k = first_feature; k < fields.size(); ++k)
      s.features.push_back(csv::parse_double(fields[k], where + " " + header[k]));
    cohort.samples.push_back(std::move(s));
  }

  load_meta(cohort, path);
  validate_cohort(cohort);
  return cohort;
}

Cohort split_patients(const Cohort& cohort, double train_frac, double val_frac,
                      double test_frac, std::uint64_t seed) {
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split_patients: fractions must sum to 1");
  if (train_frac < 0 || val_frac < 0 || test_frac < 0)
    throw std::invalid_argument("split_patients: negative fraction");

  auto patients = cohort_patients(cohort);
  const int n = static_cast<int>(patients.size());
  const double fracs[3] = {train_frac, val_frac, test_frac};
  int nonzero = 0;
  for (double f : fracs) nonzero += f > 0 ? 1 : 0;
  if (n < nonzero)
    throw std::runtime_error("split_patients: fewer patients (" + std::to_string(n) +
                             ") than nonzero splits (" + std::to_string(nonzero) + ")");

  auto rng = make_rng(seed, 0x5b117);
  std::shuffle(patients.begin(), patients.end(), rng);

  int counts[3];
  counts[0] = static_cast<int>(std::llround(train_frac * n));
  counts[1] = static_cast<int>(std::llround((train_frac + val_frac) * n)) - counts[0];
  counts[2] = n - counts[0] - counts[1];
  // Rounding may starve a nonzero-fraction split; borrow from the largest.
  for (int k = 0; k < 3; ++k) {
    if (fracs[k] > 0 && counts[k] == 0) {
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (counts[j] > counts[donor]) donor = j;
      counts[donor] -= 1;
      counts[k] += 1;
    }
  }

  Cohort out = cohort;
  out.split_assignment.clear();
  int idx = 0;
  const Split splits[3] = {Split::Train, Split::Val, Split::Test};
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < counts[k]; ++c) out.split_assignment[patients[idx++]] = splits[k];
  return out;
}

Cohort subsample_labeled_patients(const Cohort& cohort, int n_labeled, std::uint64_t seed) {
  if (n_labeled < 0)
    throw std::invalid_argument("subsample_labeled_patients: n_labeled < 0");
  std::vector<std::string> train_patients;
  for (const auto& [root, split] : cohort.split_assignment)
    if (split == Split::Train) train_patients.push_back(root);
  std::sort(train_patients.begin(), train_patients.end());
  if (n_labeled > static_cast<int>(train_patients.size()))
    throw std::invalid_argument("subsample_labeled_patients: n_labeled exceeds train patients");

  auto rng = make_rng(seed, 0x1abe1);
  std::shuffle(train_patients.begin(), train_patients.end(), rng);
  std::set<std::string> keep(train_patients.begin(), train_patients.begin() + n_labeled);

  Cohort out = cohort;
  for (auto& s : out.samples) {
    const auto root = patient_root(s.group_id, cohort.patient_delimiter);
    auto it = cohort.split_assignment.find(root);
    if (it != cohort.split_assignment.end() && it->second == Split::Train && !keep.count(root))
      s.labels.clear();
  }
  return out;
}

}  // namespace chronocon
