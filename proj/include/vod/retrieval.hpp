#ifndef VOD_RETRIEVAL_HPP
#define VOD_RETRIEVAL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vod/math.hpp"
#include "vod/sampling.hpp"

// Truncated softmax retrievers: a distribution over the top-P documents
// ranked by some score, with all densities kept in log space.

namespace vod {

struct TruncatedDistribution {
  std::vector<int> support;       // ranking order: score desc, then id asc
  std::vector<double> scores;     // parallel to support
  std::vector<double> log_probs;  // scores - log_sum_exp(scores)

  std::size_t size() const { return support.size(); }

  int index_of(int doc_id) const {
    for (std::size_t i = 0; i < support.size(); ++i)
      if (support[i] == doc_id) return static_cast<int>(i);
    return -1;
  }

  /// Ascending-id view for the priority sampler.
  DiscreteDistribution to_discrete() const {
    std::vector<std::size_t> order(support.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });
    std::vector<int> ids(support.size());
    std::vector<double> probs(support.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      ids[i] = support[order[i]];
      probs[i] = std::exp(log_probs[order[i]]);
    }
    double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& p : probs) p /= total;
    return make_distribution(std::move(ids), std::move(probs));
  }
};

/// Top-P document ids by score, ties broken toward the smaller id.
/// `scores_over_corpus[id]` is the score of document `id`.
inline std::vector<int> build_support(std::span<const double> scores_over_corpus, int p) {
  if (p < 1) throw std::invalid_argument("build_support: P must be >= 1");
  if (scores_over_corpus.empty()) throw std::invalid_argument("build_support: empty corpus");
  std::vector<int> ids(scores_over_corpus.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto better = [&](int a, int b) {
    const double sa = scores_over_corpus[static_cast<std::size_t>(a)];
    const double sb = scores_over_corpus[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  };
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(p), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    better);
  ids.resize(keep);
  return ids;
}

inline TruncatedDistribution softmax_on_support(std::vector<int> support,
                                                std::vector<double> scores) {
  if (support.empty()) throw std::invalid_argument("softmax_on_support: empty support");
  if (support.size() != scores.size())
    throw std::invalid_argument("softmax_on_support: support/scores length mismatch");
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("softmax_on_support: NaN score");
  TruncatedDistribution dist;
  dist.log_probs = log_normalize(scores);
  dist.support = std::move(support);
  dist.scores = std::move(scores);
  return dist;
}

/// log of the un-normalized density ratio between two scorers.
inline double log_zeta(double f_theta, double f_phi) { return f_theta - f_phi; }

/// KL(r || p) over matched supports; >= 0 by Gibbs' inequality.
inline double kl_divergence(const TruncatedDistribution& r, const TruncatedDistribution& p) {
  if (r.support != p.support)
    throw std::invalid_argument("kl_divergence: supports must be identical");
  double acc = 0.0;
  for (std::size_t i = 0; i < r.support.size(); ++i) {
    const double ri = std::exp(r.log_probs[i]);
    if (ri > 0.0) acc += ri * (r.log_probs[i] - p.log_probs[i]);
  }
  return std::max(0.0, acc);
}

/// Kong's effective sample size (sum w)^2 / sum w^2; lies in [1, K].
inline double effective_sample_size(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("effective_sample_size: empty weights");
  double total = 0.0, total_sq = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("effective_sample_size: weights must be finite and >= 0");
    total += w;
    total_sq += w * w;
  }
  if (total_sq <= 0.0)
    throw std::invalid_argument("effective_sample_size: at least one positive weight required");
  return (total * total) / total_sq;
}

}  // namespace vod

#endif  // VOD_RETRIEVAL_HPP
