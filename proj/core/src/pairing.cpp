#include "chronocon/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace chronocon {

std::string pair_direction_name(PairDirection d) {
  switch (d) {
    case PairDirection::Forward: return "forward";
    case PairDirection::Backward: return "backward";
    case PairDirection::Label: return "label";
    case PairDirection::TimeDist: return "time_dist";
    case PairDirection::Instance: return "instance";
  }
  throw std::logic_error("pair_direction_name: invalid direction");
}

std::pair<std::string, int> single_label(const Sample& sample) {
  if (sample.labels.size() != 1) {
    throw std::runtime_error("sample " + std::to_string(sample.sample_id) +
                             ": label-based pairing needs exactly one label, has " +
                             std::to_string(sample.labels.size()));
  }
  const auto& [name, value] = *sample.labels.begin();
  return {name, value};
}

namespace {

void finalize(PairingPlan& plan) {
  std::stable_sort(plan.terms.begin(), plan.terms.end(),
                   [](const PairTerm& x, const PairTerm& y) {
                     if (x.direction != y.direction) return x.direction < y.direction;
                     if (x.anchor != y.anchor) return x.anchor < y.anchor;
                     return x.positive < y.positive;
                   });
  plan.n_forward = 0;
  plan.n_backward = 0;
  for (const auto& t : plan.terms) {
    if (t.direction == PairDirection::Forward) ++plan.n_forward;
    if (t.direction == PairDirection::Backward) ++plan.n_backward;
  }
}

// Groups batch indices by an id key, preserving index order within groups.
template <typename KeyFn>
std::map<std::string, std::vector<int>> group_by(const std::vector<Sample>& batch, KeyFn key) {
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(batch.size()); ++i) groups[key(batch[i])].push_back(i);
  return groups;
}

// Chronological sets over an arbitrary per-element ordering value: used for
// timestamps (chrono) and ordinal labels (ordinal) alike.
PairingPlan directional_pairs(const std::vector<Sample>& batch,
                              const std::map<std::string, std::vector<int>>& groups,
                              const std::vector<double>& value) {
  PairingPlan plan;
  for (const auto& [id, members] : groups) {
    (void)id;
    for (int a : members) {
      for (int p : members) {
        if (a == p) continue;
        if (value[a] <= value[p]) {  // forward: negatives strictly later than p
          PairTerm term{a, p, {}, PairDirection::Forward};
          for (int n : members)
            if (n != a && value[n] > value[p]) term.negatives.push_back(n);
          if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
        }
        if (value[a] >= value[p]) {  // backward: negatives strictly earlier than p
          PairTerm term{a, p, {}, PairDirection::Backward};
          for (int n : members)
            if (n != a && value[n] < value[p]) term.negatives.push_back(n);
          if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
        }
      }
    }
  }
  finalize(plan);
  return plan;
}

// Distance-ranked negatives (RnC form): |v_a - v_n| >= |v_a - v_p|, n != a, p.
PairingPlan distance_pairs(const std::vector<Sample>& batch,
                           const std::map<std::string, std::vector<int>>& groups,
                           const std::vector<double>& value, PairDirection direction) {
  PairingPlan plan;
  for (const auto& [id, members] : groups) {
    (void)id;
    for (int a : members) {
      for (int p : members) {
        if (a == p) continue;
        PairTerm term{a, p, {}, direction};
        const double dp = std::fabs(value[a] - value[p]);
        for (int n : members)
          if (n != a && n != p && std::fabs(value[a] - value[n]) >= dp)
            term.negatives.push_back(n);
        if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
      }
    }
  }
  finalize(plan);
  return plan;
}

}  // namespace

PairingPlan chrono_pairs(const std::vector<Sample>& batch) {
  auto groups = group_by(batch, [](const Sample& s) { return s.group_id; });
  std::vector<double> t(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) t[i] = batch[i].timestamp;
  return directional_pairs(batch, groups, t);
}

PairingPlan ordinal_label_pairs(const std::vector<Sample>& batch) {
  std::vector<double> y(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) y[i] = single_label(batch[i]).second;
  auto groups = group_by(batch, [](const Sample& s) { return single_label(s).first; });
  return directional_pairs(batch, groups, y);
}

PairingPlan rnc_label_pairs(const std::vector<Sample>& batch) {
  std::vector<double> y(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) y[i] = single_label(batch[i]).second;
  auto groups = group_by(batch, [](const Sample& s) { return single_label(s).first; });
  return distance_pairs(batch, groups, y, PairDirection::Label);
}

PairingPlan rnc_time_pairs(const std::vector<Sample>& batch) {
  auto groups = group_by(batch, [](const Sample& s) { return s.group_id; });
  std::vector<double> t(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) t[i] = batch[i].timestamp;
  return distance_pairs(batch, groups, t, PairDirection::TimeDist);
}

PairingPlan simclr_pairs(const std::vector<Sample>& batch) {
  std::map<std::pair<std::string, double>, std::vector<int>> obs;
  for (int i = 0; i < static_cast<int>(batch.size()); ++i)
    obs[{batch[i].group_id, batch[i].timestamp}].push_back(i);

  std::vector<int> twin(batch.size(), -1);
  for (const auto& [key, members] : obs) {
    if (members.size() != 2) {
      throw std::runtime_error("simclr_pairs: observation (" + key.first +
                               ", t=" + std::to_string(key.second) + ") has " +
                               std::to_string(members.size()) + " views, expected 2");
    }
    twin[members[0]] = members[1];
    twin[members[1]] = members[0];
  }

  PairingPlan plan;
  for (int a = 0; a < static_cast<int>(batch.size()); ++a) {
    PairTerm term{a, twin[a], {}, PairDirection::Instance};
    for (int n = 0; n < static_cast<int>(batch.size()); ++n)
      if (n != a && n != term.positive) term.negatives.push_back(n);
    if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
  }
  finalize(plan);
  return plan;
}

}  // namespace chronocon
