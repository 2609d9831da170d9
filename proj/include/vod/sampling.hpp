#ifndef VOD_SAMPLING_HPP
#define VOD_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "vod/rng.hpp"

// Priority sampling without replacement (Duffield et al.) and the product
// form over option tuples. Keys are p_i/u_i with u_i ~ Uniform(0,1]; the
// threshold tau is the (k+1)-th largest key; an item is kept iff its key
// beats tau. Raw weights max(p_i, tau) give an unbiased weighted-sum
// estimator; self-normalized weights trade a small bias for lower variance.

namespace vod {

struct DiscreteDistribution {
  std::vector<int> item_ids;   // unique, ascending
  std::vector<double> probs;   // non-negative, sums to 1 within 1e-12
};

inline void validate_distribution(const DiscreteDistribution& dist) {
  if (dist.item_ids.empty()) throw std::invalid_argument("distribution: empty support");
  if (dist.item_ids.size() != dist.probs.size())
    throw std::invalid_argument("distribution: ids/probs length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < dist.item_ids.size(); ++i) {
    if (i > 0 && dist.item_ids[i] <= dist.item_ids[i - 1])
      throw std::invalid_argument("distribution: ids must be unique and ascending");
    const double p = dist.probs[i];
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("distribution: probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("distribution: probabilities must sum to 1");
}

inline DiscreteDistribution make_distribution(std::vector<int> ids, std::vector<double> probs) {
  DiscreteDistribution dist{std::move(ids), std::move(probs)};
  validate_distribution(dist);
  return dist;
}

struct PrioritySample {
  std::vector<int> indices;          // selected item ids, ascending
  std::vector<double> raw_weights;   // max(p_i, tau), parallel to indices
  std::vector<double> norm_weights;  // raw / sum(raw), sums to 1
  double threshold = 0.0;            // tau; 0 when the sample is exhaustive
  int k = 0;                         // requested sample count

  std::size_t size() const { return indices.size(); }
  bool exhaustive() const { return threshold == 0.0; }
};

/// Deterministic core: `uniforms[i]` pairs with `dist.item_ids[i]`.
/// Zero-probability items are dropped from the support up front (their keys
/// could never beat a positive threshold). Key ties break toward the smaller
/// item id, which keeps the selection a total order.
inline PrioritySample priority_sample_with_uniforms(const DiscreteDistribution& dist, int k,
                                                    std::span<const double> uniforms) {
  validate_distribution(dist);
  if (k < 1) throw std::invalid_argument("priority_sample: k must be >= 1");
  if (uniforms.size() != dist.item_ids.size())
    throw std::invalid_argument("priority_sample: one uniform required per support item");

  struct Entry {
    int id;
    double prob;
    double key;
  };
  std::vector<Entry> entries;
  entries.reserve(dist.item_ids.size());
  for (std::size_t i = 0; i < dist.item_ids.size(); ++i) {
    const double p = dist.probs[i];
    if (p <= 0.0) continue;
    const double u = uniforms[i];
    if (!(u > 0.0) || u > 1.0)
      throw std::invalid_argument("priority_sample: uniforms must lie in (0, 1]");
    entries.push_back({dist.item_ids[i], p, p / u});
  }

  PrioritySample out;
  out.k = k;
  const std::size_t n = entries.size();
  if (n == 0) throw std::invalid_argument("priority_sample: no positive-probability items");

  if (static_cast<std::size_t>(k) >= n) {
    // Exhaustive: tau = 0 and the estimator is exact.
    out.threshold = 0.0;
    out.indices.reserve(n);
    out.raw_weights.reserve(n);
    for (const Entry& e : entries) {
      out.indices.push_back(e.id);
      out.raw_weights.push_back(e.prob);
    }
    out.norm_weights = out.raw_weights;
    return out;
  }

  const auto better = [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.id < b.id;
  };
  std::nth_element(entries.begin(), entries.begin() + k, entries.end(), better);
  out.threshold = entries[static_cast<std::size_t>(k)].key;

  entries.resize(static_cast<std::size_t>(k));
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.id < b.id; });

  out.indices.reserve(entries.size());
  out.raw_weights.reserve(entries.size());
  double total = 0.0;
  for (const Entry& e : entries) {
    out.indices.push_back(e.id);
    const double w = std::max(e.prob, out.threshold);
    out.raw_weights.push_back(w);
    total += w;
  }
  out.norm_weights.resize(out.raw_weights.size());
  for (std::size_t i = 0; i < out.raw_weights.size(); ++i)
    out.norm_weights[i] = out.raw_weights[i] / total;
  return out;
}

/// Seeded draw: one uniform per support item, in stored id order.
inline PrioritySample priority_sample(const DiscreteDistribution& dist, int k, std::uint64_t seed) {
  rng::Stream stream(seed);
  std::vector<double> uniforms(dist.item_ids.size());
  for (double& u : uniforms) u = stream.uniform_open_closed();
  return priority_sample_with_uniforms(dist, k, uniforms);
}

/// Sum of w_i * f(id_i) with raw (unbiased) or self-normalized weights.
template <class ValueFn>
double estimate_weighted_sum_fn(const PrioritySample& sample, ValueFn&& value_of, bool normalized) {
  const std::vector<double>& w = normalized ? sample.norm_weights : sample.raw_weights;
  double acc = 0.0;
  for (std::size_t i = 0; i < sample.indices.size(); ++i)
    acc += w[i] * value_of(sample.indices[i]);
  return acc;
}

inline double estimate_weighted_sum(const PrioritySample& sample,
                                    const std::unordered_map<int, double>& values,
                                    bool normalized) {
  return estimate_weighted_sum_fn(
      sample,
      [&](int id) {
        const auto it = values.find(id);
        if (it == values.end())
          throw std::invalid_argument("estimate_weighted_sum: missing value for selected index");
        return it->second;
      },
      normalized);
}

/// One independent priority sample per component; the weight of a
/// combination is the product of its per-component normalized weights, so
/// the weights over all K^M combinations again sum to 1.
struct ProductSample {
  std::vector<PrioritySample> per_option;

  std::size_t options() const { return per_option.size(); }

  std::uint64_t combination_count() const {
    std::uint64_t total = 1;
    for (const PrioritySample& s : per_option) {
      const std::uint64_t n = s.size();
      if (n != 0 && total > (std::uint64_t(1) << 62) / n)
        throw std::overflow_error("ProductSample: combination count overflow");
      total *= n;
    }
    return total;
  }

  double combination_weight(std::span<const int> picks) const {
    if (picks.size() != per_option.size())
      throw std::invalid_argument("combination_weight: one pick per option required");
    double w = 1.0;
    for (std::size_t j = 0; j < picks.size(); ++j)
      w *= per_option[j].norm_weights.at(static_cast<std::size_t>(picks[j]));
    return w;
  }

  /// Visits every combination as (picks, weight); odometer order.
  template <class Fn>
  void for_each_combination(Fn&& fn) const {
    std::vector<int> picks(per_option.size(), 0);
    while (true) {
      fn(std::span<const int>(picks), combination_weight(picks));
      std::size_t j = 0;
      for (; j < picks.size(); ++j) {
        if (++picks[j] < static_cast<int>(per_option[j].size())) break;
        picks[j] = 0;
      }
      if (j == picks.size()) return;
    }
  }
};

inline ProductSample product_priority_sample(std::span<const DiscreteDistribution> dists, int k,
                                             std::uint64_t seed) {
  if (dists.empty()) throw std::invalid_argument("product_priority_sample: M must be >= 1");
  ProductSample out;
  out.per_option.reserve(dists.size());
  for (std::size_t j = 0; j < dists.size(); ++j)
    out.per_option.push_back(priority_sample(dists[j], k, rng::derive(seed, j)));
  return out;
}

}  // namespace vod

#endif  // VOD_SAMPLING_HPP
