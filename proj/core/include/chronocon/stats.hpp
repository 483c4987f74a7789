#pragma once

#include <cstddef>
#include <vector>

namespace chronocon::stats {

double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b), evaluated with the Lentz
// continued-fraction expansion. Accurate to ~1e-14 for moderate a, b.
double regularized_incomplete_beta(double x, double a, double b);

// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

// Two-sided p-value for a t statistic: I_{v/(t^2+v)}(v/2, 1/2).
double student_t_two_sided_p(double t, double dof);

double mean(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);  // n-1 denominator

// Pearson correlation; throws std::invalid_argument if either side has
// zero variance or fewer than two points.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// Linear-interpolated quantile of a sorted vector, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q);

double median(std::vector<double> xs);  // by value: sorts a copy

}  // namespace chronocon::stats
