#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "chronocon/cohort.hpp"
#include "chronocon/pairing.hpp"

namespace testutil {

using chronocon::PairDirection;
using chronocon::PairingPlan;
using chronocon::PairTerm;
using chronocon::Sample;

inline Sample make_sample(std::int64_t id, const std::string& group, double t,
                          int view = 0, std::vector<double> features = {0.0},
                          std::map<std::string, int> labels = {}) {
  Sample s;
  s.sample_id = id;
  s.group_id = group;
  s.timestamp = t;
  s.view_id = view;
  s.features = std::move(features);
  s.labels = std::move(labels);
  return s;
}

// ---------------------------------------------------------------------------
// Exhaustive-enumeration pairing oracles, written directly from the defining
// set predicates. They stay independent of the production construction: all
// (a, p, n) triples are scanned with no per-group indexing.

inline void oracle_sort(PairingPlan& plan) {
  std::stable_sort(plan.terms.begin(), plan.terms.end(),
                   [](const PairTerm& x, const PairTerm& y) {
                     if (x.direction != y.direction) return x.direction < y.direction;
                     if (x.anchor != y.anchor) return x.anchor < y.anchor;
                     return x.positive < y.positive;
                   });
  plan.n_forward = plan.n_backward = 0;
  for (const auto& t : plan.terms) {
    if (t.direction == PairDirection::Forward) ++plan.n_forward;
    if (t.direction == PairDirection::Backward) ++plan.n_backward;
  }
}

// pair_pred(a, p) gates (anchor, positive); neg_pred(a, p, n) selects
// negatives among n != a, n != p.
inline PairingPlan oracle_enumerate(
    int n, PairDirection direction,
    const std::function<bool(int, int)>& pair_pred,
    const std::function<bool(int, int, int)>& neg_pred) {
  PairingPlan plan;
  for (int a = 0; a < n; ++a) {
    for (int p = 0; p < n; ++p) {
      if (a == p || !pair_pred(a, p)) continue;
      PairTerm term{a, p, {}, direction};
      for (int k = 0; k < n; ++k)
        if (k != a && k != p && neg_pred(a, p, k)) term.negatives.push_back(k);
      if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
    }
  }
  oracle_sort(plan);
  return plan;
}

inline PairingPlan oracle_chrono(const std::vector<Sample>& b) {
  const int n = static_cast<int>(b.size());
  auto fwd = oracle_enumerate(
      n, PairDirection::Forward,
      [&](int a, int p) { return b[a].group_id == b[p].group_id && b[a].timestamp <= b[p].timestamp; },
      [&](int a, int p, int k) {
        return b[k].group_id == b[a].group_id && b[p].timestamp < b[k].timestamp;
      });
  auto bwd = oracle_enumerate(
      n, PairDirection::Backward,
      [&](int a, int p) { return b[a].group_id == b[p].group_id && b[a].timestamp >= b[p].timestamp; },
      [&](int a, int p, int k) {
        return b[k].group_id == b[a].group_id && b[p].timestamp > b[k].timestamp;
      });
  PairingPlan plan = fwd;
  plan.terms.insert(plan.terms.end(), bwd.terms.begin(), bwd.terms.end());
  oracle_sort(plan);
  return plan;
}

inline int oracle_label(const Sample& s) { return s.labels.begin()->second; }
inline std::string oracle_score_type(const Sample& s) { return s.labels.begin()->first; }

inline PairingPlan oracle_ordinal(const std::vector<Sample>& b) {
  const int n = static_cast<int>(b.size());
  auto fwd = oracle_enumerate(
      n, PairDirection::Forward,
      [&](int a, int p) {
        return oracle_score_type(b[a]) == oracle_score_type(b[p]) &&
               oracle_label(b[a]) <= oracle_label(b[p]);
      },
      [&](int a, int p, int k) {
        return oracle_score_type(b[k]) == oracle_score_type(b[a]) &&
               oracle_label(b[p]) < oracle_label(b[k]);
      });
  auto bwd = oracle_enumerate(
      n, PairDirection::Backward,
      [&](int a, int p) {
        return oracle_score_type(b[a]) == oracle_score_type(b[p]) &&
               oracle_label(b[a]) >= oracle_label(b[p]);
      },
      [&](int a, int p, int k) {
        return oracle_score_type(b[k]) == oracle_score_type(b[a]) &&
               oracle_label(b[p]) > oracle_label(b[k]);
      });
  PairingPlan plan = fwd;
  plan.terms.insert(plan.terms.end(), bwd.terms.begin(), bwd.terms.end());
  oracle_sort(plan);
  return plan;
}

inline PairingPlan oracle_rnc_label(const std::vector<Sample>& b) {
  const int n = static_cast<int>(b.size());
  return oracle_enumerate(
      n, PairDirection::Label,
      [&](int a, int p) { return oracle_score_type(b[a]) == oracle_score_type(b[p]); },
      [&](int a, int p, int k) {
        return oracle_score_type(b[k]) == oracle_score_type(b[a]) &&
               std::abs(oracle_label(b[a]) - oracle_label(b[k])) >=
                   std::abs(oracle_label(b[a]) - oracle_label(b[p]));
      });
}

inline PairingPlan oracle_rnc_time(const std::vector<Sample>& b) {
  const int n = static_cast<int>(b.size());
  return oracle_enumerate(
      n, PairDirection::TimeDist,
      [&](int a, int p) { return b[a].group_id == b[p].group_id; },
      [&](int a, int p, int k) {
        return b[k].group_id == b[a].group_id &&
               std::fabs(b[a].timestamp - b[k].timestamp) >=
                   std::fabs(b[a].timestamp - b[p].timestamp);
      });
}

inline PairingPlan oracle_simclr(const std::vector<Sample>& b) {
  const int n = static_cast<int>(b.size());
  auto twin_of = [&](int i) {
    for (int j = 0; j < n; ++j)
      if (j != i && b[j].group_id == b[i].group_id && b[j].timestamp == b[i].timestamp)
        return j;
    return -1;
  };
  PairingPlan plan;
  for (int a = 0; a < n; ++a) {
    const int p = twin_of(a);
    PairTerm term{a, p, {}, PairDirection::Instance};
    for (int k = 0; k < n; ++k)
      if (k != a && k != p) term.negatives.push_back(k);
    if (!term.negatives.empty()) plan.terms.push_back(std::move(term));
  }
  oracle_sort(plan);
  return plan;
}

// Random batches for the oracle-equivalence property: every element carries
// a single label so all five constructions apply.
inline std::vector<Sample> random_batch(std::mt19937_64& rng, int max_elements = 10,
                                        int max_groups = 3) {
  std::uniform_int_distribution<int> n_dist(1, max_elements);
  std::uniform_int_distribution<int> g_dist(1, max_groups);
  std::uniform_int_distribution<int> t_dist(0, 5);
  std::uniform_int_distribution<int> y_dist(0, 4);
  const int n = n_dist(rng);
  const int n_groups = g_dist(rng);
  std::vector<Sample> batch;
  for (int i = 0; i < n; ++i) {
    const int g = g_dist(rng) % n_groups;
    batch.push_back(make_sample(i, "g" + std::to_string(g),
                                static_cast<double>(t_dist(rng)), 0, {0.0},
                                {{"s" + std::to_string(g % 2), y_dist(rng)}}));
  }
  return batch;
}

// Central finite differences of a scalar function of a flat vector.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double eps = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + eps;
    const double up = f(xp);
    xp[i] = x[i] - eps;
    const double dn = f(xp);
    xp[i] = x[i];
    g[i] = (up - dn) / (2.0 * eps);
  }
  return g;
}

inline double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

// Unique scratch directory under the build tree's test workspace.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "/tmp/chronocon_test_%s_%d", tag.c_str(), ++counter());
    path_ = buf;
    std::string cmd = "rm -rf " + path_ + " && mkdir -p " + path_;
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("TempDir setup failed");
  }
  const std::string& path() const { return path_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string path_;
};

}  // namespace testutil
