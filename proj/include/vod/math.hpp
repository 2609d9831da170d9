#ifndef VOD_MATH_HPP
#define VOD_MATH_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace vod {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum_i exp(x[i])) with max-shift; -inf for an empty range.
/// Safe for inputs anywhere in [-500, 500] and for -inf entries.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  double m = kNegInf;
  for (double x : xs) {
    if (std::isnan(x)) throw std::invalid_argument("log_sum_exp: NaN input");
    if (x > m) m = x;
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double log_sum_exp(const std::vector<double>& xs) {
  return log_sum_exp(std::span<const double>(xs));
}

/// x[i] - log_sum_exp(x): log-probabilities of the softmax over x.
inline std::vector<double> log_normalize(std::span<const double> xs) {
  const double lse = log_sum_exp(xs);
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> xs) {
  std::vector<double> out = log_normalize(xs);
  for (double& v : out) v = std::exp(v);
  return out;
}

/// Cascade summation; the reduction tree is fixed by the input order, so the
/// result does not depend on how callers might chunk the work.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace vod

#endif  // VOD_MATH_HPP
