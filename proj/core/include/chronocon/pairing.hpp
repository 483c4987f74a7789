#pragma once

#include <string>
#include <vector>

#include "chronocon/cohort.hpp"

namespace chronocon {

enum class PairDirection { Forward, Backward, Label, TimeDist, Instance };

std::string pair_direction_name(PairDirection d);

// One contrastive term: anchor, positive, and the negative set. Negatives
// always exclude both the anchor and the positive. `a != p` holds at the
// batch-element level; an augmented twin at the same timestamp is a legal
// positive.
struct PairTerm {
  int anchor = 0;
  int positive = 0;
  std::vector<int> negatives;  // sorted ascending
  PairDirection direction = PairDirection::Forward;

  bool operator==(const PairTerm&) const = default;
};

// Anchors, positives, and per-pair negative index sets for one batch.
// Terms are sorted by (direction, anchor, positive); pairs with no valid
// negatives are omitted entirely.
struct PairingPlan {
  std::vector<PairTerm> terms;
  int n_forward = 0;   // |P<+|
  int n_backward = 0;  // |P>+|

  bool operator==(const PairingPlan&) const = default;
};

// Chronological pairing within each group:
//   forward:  id_a = id_p, t_a <= t_p, negatives {n != a : id_n = id_a, t_p < t_n}
//   backward: id_a = id_p, t_a >= t_p, negatives {n != a : id_n = id_a, t_p > t_n}
// Depends on timestamps only through their within-group order.
PairingPlan chrono_pairs(const std::vector<Sample>& batch);

// Rank-by-label-distance negatives: for each ordered (a, p) sharing a score
// type, negatives are {n != a, p : |y_a - y_n| >= |y_a - y_p|}. Every batch
// sample must carry exactly one label (its score type is the id).
PairingPlan rnc_label_pairs(const std::vector<Sample>& batch);

// Same construction with temporal distance |t_a - t_n| and group_id as the id.
PairingPlan rnc_time_pairs(const std::vector<Sample>& batch);

// Instance discrimination: each observation contributes exactly two views
// keyed by (group_id, timestamp); the positive is the other view, negatives
// are all remaining batch elements. Throws on unpaired views.
PairingPlan simclr_pairs(const std::vector<Sample>& batch);

// Chronological construction applied to ordinal labels: y replaces t and the
// score type replaces the group id, so any-vs-any patient pairs are allowed.
PairingPlan ordinal_label_pairs(const std::vector<Sample>& batch);

// The single label carried by a sample (label-based pairings require exactly
// one). Returns (score type name, value); throws otherwise.
std::pair<std::string, int> single_label(const Sample& sample);

}  // namespace chronocon
