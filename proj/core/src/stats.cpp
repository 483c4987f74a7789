#include "chronocon/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chronocon::stats {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Modified Lentz evaluation of the textbook continued fraction for I_x(a,b).
double incomplete_beta_cf(double x, double a, double b) {
  const double tiny = 1e-300;
  const double tol = 1e-15;
  const int max_terms = 200000;

  auto numer = [&](int n) -> double {
    if (n % 2 == 0) {
      double m = n / 2;
      return m * (b - m) * x / (a + 2.0 * m - 1.0) / (a + 2.0 * m);
    }
    double m = (n - 1) / 2;
    return -(a + m) * (a + b + m) * x / (a + 2.0 * m) / (a + 2.0 * m + 1.0);
  };

  double ret = 1.0;  // denom(0)
  double c = ret;
  double d = 0.0;
  for (int n = 1; n < max_terms; ++n) {
    d = 1.0 + numer(n) * d;
    if (d == 0.0) d = tiny;
    c = 1.0 + numer(n) / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    double mult = c * d;
    ret *= mult;
    if (std::fabs(mult - 1.0) <= tol) break;
  }
  return ret;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0 && a > 0.0 && b > 0.0)) {
    throw std::invalid_argument("regularized_incomplete_beta: domain error");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double logx = std::log(x);
  const double logy = std::log1p(-x);
  if (x <= (a + 1.0) / (a + b + 2.0)) {
    return std::exp(logx * a + logy * b - log_beta(a, b)) / a /
           incomplete_beta_cf(x, a, b);
  }
  return 1.0 - std::exp(logy * b + logx * a - log_beta(a, b)) / b /
                   incomplete_beta_cf(1.0 - x, b, a);
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_cdf: dof must be > 0");
  const double ib = regularized_incomplete_beta(dof / (t * t + dof), 0.5 * dof, 0.5);
  return t >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_two_sided_p: dof must be > 0");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(dof / (t * t + dof), 0.5 * dof, 0.5);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_variance: need >= 2 points");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: size mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need >= 2 points");
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("pearson: degenerate variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(average_ranks(xs), average_ranks(ys));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty input");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty input");
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace chronocon::stats
