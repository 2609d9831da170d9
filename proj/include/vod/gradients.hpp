#ifndef VOD_GRADIENTS_HPP
#define VOD_GRADIENTS_HPP

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vod/bounds.hpp"
#include "vod/math.hpp"

// Analytic gradients of the VOD objective, the exact Renyi-bound gradient on
// exhaustive supports, and a central finite-difference checker. The proposal
// parameters are frozen throughout: nothing here differentiates f_phi.

namespace vod {

struct GradientEstimate {
  std::vector<double> reader_grad;     // w.r.t. the reader parameter block
  std::vector<double> retriever_grad;  // w.r.t. the retriever parameter block
};

namespace detail {

inline void axpy(double a, std::span<const double> x, std::vector<double>& y) {
  if (y.empty()) y.assign(x.size(), 0.0);
  if (x.size() != y.size()) throw std::invalid_argument("gradient length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// omega_j = softmax_j(log s_j + log zeta_j): the self-normalized weights of
/// the normalizer-ratio estimate.
inline std::vector<double> ratio_weights(const PrioritySample& sample,
                                         std::span<const double> log_zeta) {
  std::vector<double> terms(sample.indices.size());
  for (std::size_t j = 0; j < terms.size(); ++j)
    terms[j] = std::log(sample.norm_weights[j]) + log_zeta[j];
  return softmax(terms);
}

}  // namespace detail

/// Estimate of grad log p(d_t | q) from the sample alone:
///   h(d_t) = grad f(d_t) - sum_j omega_j grad f(d_j)
/// which needs no normalizing constant. Collapses to zero at K = 1.
inline std::vector<double> retriever_logprob_grad(
    const PrioritySample& sample, std::span<const double> log_zeta,
    const std::vector<std::vector<double>>& score_grads, std::size_t target_index) {
  const std::size_t k = sample.indices.size();
  if (k == 0) throw std::invalid_argument("retriever_logprob_grad: empty sample");
  if (log_zeta.size() != k || score_grads.size() != k)
    throw std::invalid_argument("retriever_logprob_grad: length mismatch");
  if (target_index >= k) throw std::out_of_range("retriever_logprob_grad: target out of range");

  const std::vector<double> omega = detail::ratio_weights(sample, log_zeta);
  std::vector<double> out = score_grads[target_index];
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] -= omega[j] * score_grads[j][c];
  return out;
}

/// Self-normalized estimate of the bound gradient:
///   sum_i W_i (grad log p(a | d_i, q) + h(d_i, q)),
///   W_i = softmax_i(log s_i + (1-alpha)(reader_i + zeta_i))
/// with W = s exactly in the alpha -> 1 limit. W is returned to callers via
/// the bound report path; here the two parameter blocks are accumulated.
inline GradientEstimate vod_gradient(double alpha, const BoundInput& input,
                                     const std::vector<std::vector<double>>& reader_grads,
                                     const std::vector<std::vector<double>>& retriever_score_grads) {
  BoundInput checked = input;
  checked.alpha = alpha;
  validate_bound_input(checked);
  const std::size_t k = input.sample.indices.size();
  if (reader_grads.size() != k || retriever_score_grads.size() != k)
    throw std::invalid_argument("vod_gradient: per-document gradient lists must match the sample");

  std::vector<double> weights;
  if (std::abs(1.0 - alpha) < kAlphaOneTol) {
    weights = input.sample.norm_weights;
  } else {
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < k; ++i)
      terms[i] = std::log(input.sample.norm_weights[i]) +
                 (1.0 - alpha) * (input.reader_loglik[i] + input.log_zeta[i]);
    weights = softmax(terms);
  }

  const std::vector<double> omega = detail::ratio_weights(input.sample, input.log_zeta);

  GradientEstimate out;
  std::vector<double> mean_score_grad;  // sum_j omega_j grad f(d_j), shared by every h(d_i)
  for (std::size_t j = 0; j < k; ++j)
    detail::axpy(omega[j], retriever_score_grads[j], mean_score_grad);

  for (std::size_t i = 0; i < k; ++i) {
    detail::axpy(weights[i], reader_grads[i], out.reader_grad);
    detail::axpy(weights[i], retriever_score_grads[i], out.retriever_grad);
  }
  // sum_i W_i h(d_i) = sum_i W_i grad f(d_i) - mean_score_grad, since sum W = 1.
  for (std::size_t c = 0; c < out.retriever_grad.size(); ++c)
    out.retriever_grad[c] -= mean_score_grad[c];
  return out;
}

/// Exact bound gradient on the full support, with the exact softmax gradient
/// for the retriever term. Requires the instance's gradient hooks.
inline GradientEstimate exact_rvb_gradient(double alpha, const LatentInstance& inst) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("exact_rvb_gradient: alpha must lie in [0, 1]");
  if (!inst.reader_grad || !inst.f_theta_grad)
    throw std::invalid_argument("exact_rvb_gradient: instance gradient hooks required");
  const auto t = detail::exhaustive_tables(inst);
  const std::size_t n = inst.support.size();

  std::vector<double> weights;
  if (std::abs(1.0 - alpha) < kAlphaOneTol) {
    weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) weights[i] = std::exp(t.log_r[i]);
  } else {
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = t.log_r[i] + (1.0 - alpha) * t.log_w[i];
    weights = softmax(terms);
  }

  std::vector<double> mean_score_grad;  // sum_d p(d | q) grad f(d): the exact log-Z gradient
  for (std::size_t i = 0; i < n; ++i)
    detail::axpy(std::exp(t.log_p[i]), inst.f_theta_grad(inst.support[i]), mean_score_grad);

  GradientEstimate out;
  for (std::size_t i = 0; i < n; ++i) {
    detail::axpy(weights[i], inst.reader_grad(inst.support[i]), out.reader_grad);
    detail::axpy(weights[i], inst.f_theta_grad(inst.support[i]), out.retriever_grad);
  }
  for (std::size_t c = 0; c < out.retriever_grad.size(); ++c)
    out.retriever_grad[c] -= mean_score_grad[c];
  return out;
}

struct PerDocGradients {
  std::vector<std::vector<double>> reader;
  std::vector<std::vector<double>> retriever;
};

/// Gradient hooks evaluated on exactly the sampled documents.
inline PerDocGradients collect_sample_gradients(const PrioritySample& sample,
                                                const LatentInstance& inst) {
  if (!inst.reader_grad || !inst.f_theta_grad)
    throw std::invalid_argument("collect_sample_gradients: instance gradient hooks required");
  PerDocGradients out;
  out.reader.reserve(sample.indices.size());
  out.retriever.reserve(sample.indices.size());
  for (int d : sample.indices) {
    out.reader.push_back(inst.reader_grad(d));
    out.retriever.push_back(inst.f_theta_grad(d));
  }
  return out;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
inline std::vector<double> finite_difference(
    const std::function<double(std::span<const double>)>& objective, std::span<const double> theta,
    double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference: h must be > 0");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = objective(point);
    point[i] = saved - h;
    const double down = objective(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("finite_difference: objective returned a non-finite value");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace vod

#endif  // VOD_GRADIENTS_HPP
