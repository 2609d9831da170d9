#ifndef VOD_MCQA_HPP
#define VOD_MCQA_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vod/bounds.hpp"
#include "vod/gradients.hpp"
#include "vod/math.hpp"
#include "vod/retrieval.hpp"
#include "vod/rng.hpp"
#include "vod/sampling.hpp"
#include "vod/scoring.hpp"

// Multiple-choice model: one retrieved document per answer option, an
// option-softmax reader over g(d_j, q_j), and the VOD objective evaluated on
// the product of per-option priority samples (K^M combinations).
//
// Per-option reader logits are computed once (M*K score calls); the
// enumeration over combinations only re-combines those scalars.

namespace vod {

struct McqaInstance {
  int qid = 0;
  std::vector<std::string> question;
  std::vector<std::vector<std::string>> options;  // M >= 2 token lists
  int correct_index = 0;

  int num_options() const { return static_cast<int>(options.size()); }

  /// q_j = [question; option j].
  QueryRecord option_query(int j) const {
    if (j < 0 || j >= num_options()) throw std::invalid_argument("option_query: bad option index");
    return make_query(question, options[static_cast<std::size_t>(j)]);
  }
};

inline McqaInstance make_mcqa_instance(int qid, std::vector<std::string> question,
                                       std::vector<std::vector<std::string>> options,
                                       int correct_index) {
  if (question.empty()) throw std::invalid_argument("mcqa instance: empty question");
  if (options.size() < 2) throw std::invalid_argument("mcqa instance: M must be >= 2");
  for (const auto& opt : options)
    if (opt.empty()) throw std::invalid_argument("mcqa instance: empty answer option");
  if (correct_index < 0 || static_cast<std::size_t>(correct_index) >= options.size())
    throw std::invalid_argument("mcqa instance: correct index out of range");
  McqaInstance inst;
  inst.qid = qid;
  inst.question = std::move(question);
  inst.options = std::move(options);
  inst.correct_index = correct_index;
  return inst;
}

/// Per-option proposal distributions and the priority samples drawn from
/// them. Supports may differ across options.
struct OptionRetrievalState {
  std::vector<TruncatedDistribution> proposals;  // r(d | q_j), one per option
  std::vector<PrioritySample> samples;           // one per option, k docs each

  std::size_t num_options() const { return proposals.size(); }
};

/// Draws one independent size-k priority sample per option (split sub-seeds).
inline OptionRetrievalState make_option_state(std::vector<TruncatedDistribution> proposals, int k,
                                              std::uint64_t seed) {
  if (proposals.empty()) throw std::invalid_argument("option state: no proposals");
  OptionRetrievalState state;
  state.samples.reserve(proposals.size());
  for (std::size_t j = 0; j < proposals.size(); ++j)
    state.samples.push_back(priority_sample(proposals[j].to_discrete(), k, rng::derive(seed, j)));
  state.proposals = std::move(proposals);
  return state;
}

/// Raw reader logits g(d_j, q_j), one document per option.
inline std::vector<double> option_logits(const ScoreModel& reader, std::span<const int> docs,
                                         const McqaInstance& inst, const Corpus& corpus) {
  if (docs.size() != static_cast<std::size_t>(inst.num_options()))
    throw std::invalid_argument("option_logits: need exactly one document per option");
  std::vector<double> logits(docs.size());
  for (std::size_t j = 0; j < docs.size(); ++j)
    logits[j] = reader.score(inst.option_query(static_cast<int>(j)), docs[j], corpus);
  return logits;
}

inline constexpr std::uint64_t kDefaultEnumerationCap = 65536;

/// Raised when K^M exceeds the enumeration cap; the enumeration is exact by
/// contract, never silently subsampled.
struct EnumerationLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// argmax with ties to the smallest index.
inline int predict(std::span<const double> probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("predict: empty probability vector");
  int best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[best]) best = static_cast<int>(i);
  return best;
}

namespace detail {

/// Everything the combination enumeration consumes, gathered with exactly
/// M*K reader and M*K retriever score evaluations.
struct McqaTables {
  std::vector<std::vector<double>> reader_logits;  // [option][slot]
  std::vector<std::vector<double>> log_zeta;
  std::vector<std::vector<double>> log_s;
  std::vector<std::vector<double>> omega;  // per-option softmax(log_s + log_zeta)
  std::vector<std::size_t> sizes;
  std::uint64_t combinations = 1;
};

inline McqaTables mcqa_tables(const OptionRetrievalState& state, const ScoreModel& reader,
                              const ScoreModel& retriever, const McqaInstance& inst,
                              const Corpus& corpus, std::uint64_t enumeration_cap) {
  const std::size_t m = state.num_options();
  if (m == 0) throw std::invalid_argument("mcqa: empty state");
  if (m != static_cast<std::size_t>(inst.num_options()))
    throw std::invalid_argument("mcqa: state/options mismatch");

  McqaTables t;
  t.reader_logits.resize(m);
  t.log_zeta.resize(m);
  t.log_s.resize(m);
  t.omega.resize(m);
  t.sizes.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const QueryRecord q = inst.option_query(static_cast<int>(j));
    const PrioritySample& sample = state.samples[j];
    const TruncatedDistribution& proposal = state.proposals[j];
    const std::size_t k = sample.size();
    t.sizes[j] = k;
    if (t.combinations > enumeration_cap / std::max<std::uint64_t>(k, 1))
      throw EnumerationLimitError("mcqa: K^M exceeds the enumeration cap");
    t.combinations *= k;
    t.reader_logits[j].resize(k);
    t.log_zeta[j].resize(k);
    t.log_s[j].resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const int d = sample.indices[i];
      const int pos = proposal.index_of(d);
      if (pos < 0) throw std::invalid_argument("mcqa: sampled document outside its support");
      t.reader_logits[j][i] = reader.score(q, d, corpus);
      t.log_zeta[j][i] =
          log_zeta(retriever.score(q, d, corpus), proposal.scores[static_cast<std::size_t>(pos)]);
      t.log_s[j][i] = std::log(sample.norm_weights[i]);
    }
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < k; ++i) terms[i] = t.log_s[j][i] + t.log_zeta[j][i];
    t.omega[j] = softmax(terms);
  }
  if (t.combinations > enumeration_cap)
    throw EnumerationLimitError("mcqa: K^M exceeds the enumeration cap");
  return t;
}

template <class Fn>
void for_each_combination(const std::vector<std::size_t>& sizes, Fn&& fn) {
  std::vector<std::size_t> idx(sizes.size(), 0);
  while (true) {
    fn(std::span<const std::size_t>(idx));
    std::size_t j = 0;
    for (; j < idx.size(); ++j) {
      if (++idx[j] < sizes[j]) break;
      idx[j] = 0;
    }
    if (j == idx.size()) return;
  }
}

/// Per-combination log s(D), log zeta(D), and per-option reader log-probs
/// log p(a_j | D, Q); combination index follows odometer order.
struct CombinationArrays {
  std::vector<double> log_s;
  std::vector<double> log_zeta;
  std::vector<std::vector<double>> log_reader;  // [option][combination]
};

inline CombinationArrays combination_arrays(const McqaTables& t) {
  CombinationArrays arrays;
  const std::size_t m = t.sizes.size();
  arrays.log_s.reserve(t.combinations);
  arrays.log_zeta.reserve(t.combinations);
  arrays.log_reader.assign(m, {});
  for (auto& v : arrays.log_reader) v.reserve(t.combinations);
  std::vector<double> logits(m);
  for_each_combination(t.sizes, [&](std::span<const std::size_t> idx) {
    double log_s = 0.0, log_zeta_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      log_s += t.log_s[j][idx[j]];
      log_zeta_sum += t.log_zeta[j][idx[j]];
      logits[j] = t.reader_logits[j][idx[j]];
    }
    const double lse = log_sum_exp(logits);
    arrays.log_s.push_back(log_s);
    arrays.log_zeta.push_back(log_zeta_sum);
    for (std::size_t j = 0; j < m; ++j) arrays.log_reader[j].push_back(logits[j] - lse);
  });
  return arrays;
}

inline BoundReport bound_from_arrays(double alpha, std::span<const double> log_s,
                                     std::span<const double> log_zeta,
                                     std::span<const double> log_reader) {
  const std::size_t n = log_s.size();
  std::vector<double> ratio_terms(n);
  for (std::size_t c = 0; c < n; ++c) ratio_terms[c] = log_s[c] + log_zeta[c];
  const double log_ratio = log_sum_exp(ratio_terms);

  std::vector<double> log_v(n);
  for (std::size_t c = 0; c < n; ++c) log_v[c] = log_reader[c] + log_zeta[c] - log_ratio;

  BoundReport report;
  if (alpha > 1.0 - kAlphaOneTol) {
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += std::exp(log_s[c]) * log_v[c];
    report.value = acc;
    report.per_doc_norm_weights.resize(n);
    for (std::size_t c = 0; c < n; ++c) report.per_doc_norm_weights[c] = std::exp(log_s[c]);
  } else {
    std::vector<double> weighted(n);
    for (std::size_t c = 0; c < n; ++c)
      weighted[c] = log_s[c] + (1.0 - alpha) * log_v[c];
    report.value = log_sum_exp(weighted) / (1.0 - alpha);
    report.per_doc_norm_weights = softmax(weighted);
  }
  std::vector<double> combined(n);
  for (std::size_t c = 0; c < n; ++c) combined[c] = std::exp(log_s[c] + log_v[c]);
  report.ess = effective_sample_size(combined);
  return report;
}

}  // namespace detail

inline void validate_mcqa_alpha(double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mcqa: alpha must lie in [0, 1]");
}

/// Bound value for each answer option as the target, from one shared sample
/// set; used by Monte-Carlo evaluation.
inline std::vector<double> mcqa_bound_all_options(double alpha, const OptionRetrievalState& state,
                                                  const ScoreModel& reader,
                                                  const ScoreModel& retriever,
                                                  const McqaInstance& inst, const Corpus& corpus,
                                                  std::uint64_t cap = kDefaultEnumerationCap) {
  validate_mcqa_alpha(alpha);
  const auto tables = detail::mcqa_tables(state, reader, retriever, inst, corpus, cap);
  const auto arrays = detail::combination_arrays(tables);
  std::vector<double> values(arrays.log_reader.size());
  for (std::size_t j = 0; j < values.size(); ++j)
    values[j] =
        detail::bound_from_arrays(alpha, arrays.log_s, arrays.log_zeta, arrays.log_reader[j])
            .value;
  return values;
}

/// The VOD objective for the correct option over all K^M combinations.
inline BoundReport mcqa_vod_objective(double alpha, const OptionRetrievalState& state,
                                      const ScoreModel& reader, const ScoreModel& retriever,
                                      const McqaInstance& inst, const Corpus& corpus,
                                      std::uint64_t cap = kDefaultEnumerationCap) {
  validate_mcqa_alpha(alpha);
  const auto tables = detail::mcqa_tables(state, reader, retriever, inst, corpus, cap);
  const auto arrays = detail::combination_arrays(tables);
  const auto target = static_cast<std::size_t>(inst.correct_index);
  return detail::bound_from_arrays(alpha, arrays.log_s, arrays.log_zeta,
                                   arrays.log_reader[target]);
}

/// Gradient of the objective w.r.t. both parameter blocks. The combination
/// weights W(D) couple the options, but every per-document gradient enters
/// linearly, so the K^M pass only accumulates scalar coefficients:
///   reader:    A[j][i] = sum_{D : D_j = i} W(D) (1[j = target] - p_j(D))
///   retriever: B[j][i] = sum_{D : D_j = i} W(D) - omega[j][i]
/// and the M*K gradient vectors are combined once at the end.
inline GradientEstimate mcqa_vod_gradient(double alpha, const OptionRetrievalState& state,
                                          const ScoreModel& reader, const ScoreModel& retriever,
                                          const McqaInstance& inst, const Corpus& corpus,
                                          std::uint64_t cap = kDefaultEnumerationCap,
                                          BoundReport* report_out = nullptr) {
  validate_mcqa_alpha(alpha);
  const auto t = detail::mcqa_tables(state, reader, retriever, inst, corpus, cap);
  const std::size_t m = t.sizes.size();
  const auto target = static_cast<std::size_t>(inst.correct_index);

  // Pass 1: combination weights W(D).
  const auto arrays = detail::combination_arrays(t);
  const std::size_t n = arrays.log_s.size();
  std::vector<double> weights(n);
  if (alpha > 1.0 - kAlphaOneTol) {
    for (std::size_t c = 0; c < n; ++c) weights[c] = std::exp(arrays.log_s[c]);
  } else {
    std::vector<double> terms(n);
    for (std::size_t c = 0; c < n; ++c)
      terms[c] = arrays.log_s[c] +
                 (1.0 - alpha) * (arrays.log_reader[target][c] + arrays.log_zeta[c]);
    weights = softmax(terms);
  }
  if (report_out != nullptr)
    *report_out =
        detail::bound_from_arrays(alpha, arrays.log_s, arrays.log_zeta, arrays.log_reader[target]);

  // Pass 2: scalar coefficients per (option, sample slot).
  std::vector<std::vector<double>> reader_coeff(m), retr_coeff(m);
  for (std::size_t j = 0; j < m; ++j) {
    reader_coeff[j].assign(t.sizes[j], 0.0);
    retr_coeff[j].assign(t.sizes[j], 0.0);
  }
  std::size_t c = 0;
  detail::for_each_combination(t.sizes, [&](std::span<const std::size_t> idx) {
    const double w = weights[c];
    for (std::size_t j = 0; j < m; ++j) {
      const double p_j = std::exp(arrays.log_reader[j][c]);
      reader_coeff[j][idx[j]] += w * ((j == target ? 1.0 : 0.0) - p_j);
      retr_coeff[j][idx[j]] += w;
    }
    ++c;
  });
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < t.sizes[j]; ++i) retr_coeff[j][i] -= t.omega[j][i];

  // Pass 3: combine the per-document gradient vectors.
  GradientEstimate out;
  out.reader_grad.assign(static_cast<std::size_t>(reader.param_count()), 0.0);
  out.retriever_grad.assign(static_cast<std::size_t>(retriever.param_count()), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const QueryRecord q = inst.option_query(static_cast<int>(j));
    for (std::size_t i = 0; i < t.sizes[j]; ++i) {
      const int d = state.samples[j].indices[i];
      const ScoreGrad rg = reader.score_and_grad(q, d, corpus);
      for (std::size_t p = 0; p < out.reader_grad.size(); ++p)
        out.reader_grad[p] += reader_coeff[j][i] * rg.grad[p];
      const ScoreGrad fg = retriever.score_and_grad(q, d, corpus);
      for (std::size_t p = 0; p < out.retriever_grad.size(); ++p)
        out.retriever_grad[p] += retr_coeff[j][i] * fg.grad[p];
    }
  }
  return out;
}

/// Mean over C Monte-Carlo sample sets of the per-option softmax of bound
/// values; each replicate redraws every option's priority sample.
inline std::vector<double> mc_eval(
    const McqaInstance& inst, const ScoreModel& reader, const ScoreModel& retriever,
    const std::function<OptionRetrievalState(std::uint64_t)>& state_factory, int c_samples,
    double alpha, std::uint64_t seed, const Corpus& corpus,
    std::uint64_t cap = kDefaultEnumerationCap) {
  validate_mcqa_alpha(alpha);
  if (c_samples < 1) throw std::invalid_argument("mc_eval: C must be >= 1");
  std::vector<double> mean;
  for (int c = 0; c < c_samples; ++c) {
    const OptionRetrievalState state = state_factory(rng::derive(seed, static_cast<std::uint64_t>(c)));
    const std::vector<double> values =
        mcqa_bound_all_options(alpha, state, reader, retriever, inst, corpus, cap);
    const std::vector<double> probs = softmax(values);
    if (mean.empty()) mean.assign(probs.size(), 0.0);
    for (std::size_t j = 0; j < probs.size(); ++j) mean[j] += probs[j] / c_samples;
  }
  return mean;
}

}  // namespace vod

#endif  // VOD_MCQA_HPP
