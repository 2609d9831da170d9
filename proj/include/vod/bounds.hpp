#ifndef VOD_BOUNDS_HPP
#define VOD_BOUNDS_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vod/math.hpp"
#include "vod/retrieval.hpp"
#include "vod/rng.hpp"
#include "vod/sampling.hpp"

// The VOD objective: a self-normalized priority-sampling estimate of the
// Renyi variational bound, evaluated from K sampled documents and never
// touching the retriever's normalizing constant. Exact oracles (marginal
// log-likelihood, RVB, ELBO, with-replacement IW-RVB) enumerate the full
// support and exist to pin the estimator down in tests.

namespace vod {

/// alpha values within this distance of 1 use the continuity limit.
inline constexpr double kAlphaOneTol = 1e-6;

struct BoundInput {
  double alpha = 0.0;
  PrioritySample sample;              // drawn from the proposal r
  std::vector<double> reader_loglik;  // log p(a | d_i, q), per sampled doc
  std::vector<double> log_zeta;       // f_theta(d_i) - f_phi(d_i), per sampled doc
};

inline void validate_bound_input(const BoundInput& input) {
  if (input.alpha < 0.0 || input.alpha > 1.0)
    throw std::invalid_argument("bound input: alpha must lie in [0, 1]");
  if (input.sample.indices.empty()) throw std::invalid_argument("bound input: empty sample");
  if (input.reader_loglik.size() != input.sample.indices.size() ||
      input.log_zeta.size() != input.sample.indices.size())
    throw std::invalid_argument("bound input: per-document lists must have equal lengths");
}

struct BoundReport {
  double value = 0.0;
  double ess = 0.0;                         // ESS of the combined weights s_i * v_i
  std::vector<double> per_doc_norm_weights;  // softmax(log s + (1-alpha) log v), sums to 1
};

/// log(Z_theta / Z_phi) estimated as logsumexp_j(log s_j + log zeta_j).
inline double normalizer_ratio_log_estimate(const PrioritySample& sample,
                                            std::span<const double> log_zeta) {
  if (sample.indices.empty()) throw std::invalid_argument("normalizer ratio: empty sample");
  if (log_zeta.size() != sample.indices.size())
    throw std::invalid_argument("normalizer ratio: length mismatch");
  std::vector<double> terms(log_zeta.size());
  for (std::size_t i = 0; i < log_zeta.size(); ++i)
    terms[i] = std::log(sample.norm_weights[i]) + log_zeta[i];
  return log_sum_exp(terms);
}

/// The K-sample bound value. All arithmetic in log space:
///   log v_i  = reader_i + zeta_i - logsumexp_j(log s_j + zeta_j)
///   value    = (1-alpha)^-1 logsumexp_i(log s_i + (1-alpha) log v_i)
/// with the alpha -> 1 limit sum_i s_i log v_i.
inline BoundReport vod_objective(const BoundInput& input) {
  validate_bound_input(input);
  const std::size_t k = input.sample.indices.size();

  std::vector<double> log_s(k);
  for (std::size_t i = 0; i < k; ++i) log_s[i] = std::log(input.sample.norm_weights[i]);

  std::vector<double> ratio_terms(k);
  for (std::size_t i = 0; i < k; ++i) ratio_terms[i] = log_s[i] + input.log_zeta[i];
  const double log_ratio = log_sum_exp(ratio_terms);

  std::vector<double> log_v(k);
  for (std::size_t i = 0; i < k; ++i)
    log_v[i] = input.reader_loglik[i] + input.log_zeta[i] - log_ratio;

  BoundReport report;
  const double one_minus_alpha = 1.0 - input.alpha;
  std::vector<double> weighted(k);
  if (std::abs(one_minus_alpha) < kAlphaOneTol) {
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += input.sample.norm_weights[i] * log_v[i];
    report.value = acc;
    report.per_doc_norm_weights = input.sample.norm_weights;
  } else {
    for (std::size_t i = 0; i < k; ++i) weighted[i] = log_s[i] + one_minus_alpha * log_v[i];
    report.value = log_sum_exp(weighted) / one_minus_alpha;
    report.per_doc_norm_weights = softmax(weighted);
  }

  std::vector<double> combined(k);
  for (std::size_t i = 0; i < k; ++i) combined[i] = std::exp(log_s[i] + log_v[i]);
  report.ess = effective_sample_size(combined);
  return report;
}

/// A single-latent problem over an explicit support. The score hooks stand in
/// for reader/retriever networks; wrapping them with counters is how the
/// complexity contract is checked.
struct LatentInstance {
  std::vector<int> support;
  std::function<double(int)> reader_loglik;  // log p(a | d, q)
  std::function<double(int)> f_theta;        // trainable retriever score
  std::function<double(int)> f_phi;          // frozen proposal score
  // Optional analytic gradients, required by the gradient oracles.
  std::function<std::vector<double>(int)> reader_grad;
  std::function<std::vector<double>(int)> f_theta_grad;
};

/// The proposal r(d) = softmax of f_phi over the support, as a sampleable
/// distribution.
inline DiscreteDistribution proposal_distribution(const LatentInstance& inst) {
  if (inst.support.empty()) throw std::invalid_argument("instance: empty support");
  std::vector<double> scores(inst.support.size());
  for (std::size_t i = 0; i < inst.support.size(); ++i) scores[i] = inst.f_phi(inst.support[i]);
  return softmax_on_support(inst.support, scores).to_discrete();
}

/// Evaluates the reader and f_theta on exactly the sampled documents
/// (K calls each); f_phi values are the proposal's cached scores.
inline BoundInput make_bound_input(double alpha, PrioritySample sample,
                                   const LatentInstance& inst) {
  BoundInput input;
  input.alpha = alpha;
  input.reader_loglik.reserve(sample.indices.size());
  input.log_zeta.reserve(sample.indices.size());
  for (int d : sample.indices) {
    input.reader_loglik.push_back(inst.reader_loglik(d));
    input.log_zeta.push_back(log_zeta(inst.f_theta(d), inst.f_phi(d)));
  }
  input.sample = std::move(sample);
  return input;
}

namespace detail {

struct ExhaustiveTables {
  std::vector<double> log_r;       // log proposal probabilities
  std::vector<double> log_p;       // log retriever probabilities
  std::vector<double> log_w;       // reader + log_p - log_r
  std::vector<double> reader;      // reader log-likelihoods
};

inline ExhaustiveTables exhaustive_tables(const LatentInstance& inst) {
  const std::size_t n = inst.support.size();
  if (n == 0) throw std::invalid_argument("instance: empty support");
  ExhaustiveTables t;
  std::vector<double> f_phi(n), f_theta(n);
  t.reader.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int d = inst.support[i];
    f_phi[i] = inst.f_phi(d);
    f_theta[i] = inst.f_theta(d);
    t.reader[i] = inst.reader_loglik(d);
  }
  t.log_r = log_normalize(f_phi);
  t.log_p = log_normalize(f_theta);
  t.log_w.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.log_w[i] = t.reader[i] + t.log_p[i] - t.log_r[i];
  return t;
}

}  // namespace detail

/// log sum_d p(a | d, q) p(d | q), the exhaustive marginal.
inline double exact_marginal_log_likelihood(const LatentInstance& inst) {
  const auto t = detail::exhaustive_tables(inst);
  std::vector<double> joint(t.reader.size());
  for (std::size_t i = 0; i < joint.size(); ++i) joint[i] = t.reader[i] + t.log_p[i];
  return log_sum_exp(joint);
}

/// sum_d r(d) [log p(a, d | q) - log r(d)].
inline double exact_elbo(const LatentInstance& inst) {
  const auto t = detail::exhaustive_tables(inst);
  std::vector<double> terms(t.reader.size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = std::exp(t.log_r[i]) * t.log_w[i];
  return pairwise_sum(terms);
}

/// (1-alpha)^-1 log E_r[w^(1-alpha)], the Renyi bound on the full support;
/// continuous in alpha = 1 where it equals the ELBO.
inline double exact_rvb(double alpha, const LatentInstance& inst) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("exact_rvb: alpha must lie in [0, 1]");
  if (std::abs(1.0 - alpha) < kAlphaOneTol) return exact_elbo(inst);
  const auto t = detail::exhaustive_tables(inst);
  std::vector<double> terms(t.reader.size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = t.log_r[i] + (1.0 - alpha) * t.log_w[i];
  return log_sum_exp(terms) / (1.0 - alpha);
}

/// With-replacement importance-weighted bound, K i.i.d. draws from r.
/// Requires exact proposal densities, so this is an oracle, not a training
/// path.
inline double iw_rvb_with_replacement(double alpha, const LatentInstance& inst, int k,
                                      std::uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("iw_rvb: alpha must lie in [0, 1]");
  if (k < 1) throw std::invalid_argument("iw_rvb: k must be >= 1");
  const auto t = detail::exhaustive_tables(inst);
  std::vector<double> r_probs(t.log_r.size());
  for (std::size_t i = 0; i < r_probs.size(); ++i) r_probs[i] = std::exp(t.log_r[i]);
  rng::CategoricalSampler sampler(r_probs);
  rng::Stream stream(seed);
  std::vector<double> draws(static_cast<std::size_t>(k));
  for (double& d : draws) d = t.log_w[sampler.draw(stream)];

  if (std::abs(1.0 - alpha) < kAlphaOneTol) {
    double acc = 0.0;
    for (double d : draws) acc += d;
    return acc / static_cast<double>(k);
  }
  std::vector<double> scaled(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) scaled[i] = (1.0 - alpha) * draws[i];
  return (log_sum_exp(scaled) - std::log(static_cast<double>(k))) / (1.0 - alpha);
}

/// Top-K truncated marginal log-likelihood: the alpha = 0 exhaustive-sample
/// special case of the VOD objective, shared code path included.
inline BoundReport realm_objective(const PrioritySample& sample, const LatentInstance& inst) {
  std::vector<int> sorted_support = inst.support;
  std::sort(sorted_support.begin(), sorted_support.end());
  if (!sample.exhaustive() || sample.indices != sorted_support)
    throw std::invalid_argument("realm_objective: sample must cover the full truncated support");
  return vod_objective(make_bound_input(0.0, sample, inst));
}

}  // namespace vod

#endif  // VOD_BOUNDS_HPP
