#ifndef VOD_TRAINING_HPP
#define VOD_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vod/bounds.hpp"
#include "vod/mcqa.hpp"
#include "vod/optimizer.hpp"
#include "vod/retrieval.hpp"
#include "vod/rng.hpp"
#include "vod/scoring.hpp"
#include "vod/synthetic.hpp"

// Round-based end-to-end training. Each round re-indexes the proposal
// distributions (hybrid BM25 + retriever checkpoint, checkpoint frozen for
// the whole round), runs T gradient steps on the VOD objective, and
// evaluates with Monte-Carlo sampling. Alpha anneals from the ELBO (1) to
// the marginal likelihood (0) across the first round.

namespace vod {

struct AlphaSchedule {
  enum class Kind { kLinear, kConstant };
  Kind kind = Kind::kLinear;
  double constant_value = 0.0;
};

/// Linear: max(0, 1 - step/T) — 1 at step 0, 0 from step T onward.
inline double alpha_schedule(std::int64_t step, std::int64_t steps_per_round,
                             const AlphaSchedule& schedule) {
  if (step < 0) throw std::invalid_argument("alpha_schedule: step must be >= 0");
  switch (schedule.kind) {
    case AlphaSchedule::Kind::kConstant:
      return schedule.constant_value;
    case AlphaSchedule::Kind::kLinear: {
      if (steps_per_round <= 0) return 0.0;
      const double progress =
          static_cast<double>(step) / static_cast<double>(steps_per_round);
      return std::max(0.0, 1.0 - progress);
    }
  }
  throw std::invalid_argument("alpha_schedule: unknown kind");
}

struct TrainConfig {
  int rounds = 2;
  int steps_per_round = 150;
  int k = 8;
  int m = 4;
  int p = 100;
  int c_eval = 10;
  double tau = 5.0;
  AlphaSchedule alpha;
  double eval_alpha = 0.0;
  int batch_size = 8;
  bool train_reader = true;
  bool train_retriever = true;
  AdamConfig reader_opt;
  AdamConfig retriever_opt;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& config, std::size_t corpus_size) {
  if (config.rounds < 1) throw std::invalid_argument("train config: rounds must be >= 1");
  if (config.steps_per_round < 0)
    throw std::invalid_argument("train config: steps_per_round must be >= 0");
  if (config.k < 1 || config.p < 1) throw std::invalid_argument("train config: K and P must be >= 1");
  if (config.k > config.p) throw std::invalid_argument("train config: K must be <= P");
  if (static_cast<std::size_t>(config.p) > corpus_size)
    std::cerr << "notice: P exceeds the corpus size; clamping to N=" << corpus_size << "\n";
  if (config.c_eval < 1) throw std::invalid_argument("train config: C_eval must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (!(config.tau > 0.0)) throw std::invalid_argument("train config: tau must be > 0");
}

/// Per-query proposal distributions, frozen for one round.
struct RoundCache {
  std::vector<std::vector<TruncatedDistribution>> train_proposals;  // [instance][option]
  std::vector<std::vector<TruncatedDistribution>> eval_proposals;
};

/// Dense BM25 scores of one query against every document, via a single
/// postings traversal.
inline std::vector<double> bm25_scores_all_docs(const Bm25Index& index,
                                                std::span<const std::string> query_tokens) {
  std::vector<double> scores(static_cast<std::size_t>(index.n_docs), 0.0);
  for (const std::string& term : query_tokens) {
    const auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5));
    for (const auto& [doc_id, tf] : it->second) {
      const double len = index.doc_lengths[static_cast<std::size_t>(doc_id)];
      const double norm = index.k1 * (1.0 - index.b + index.b * len / index.avg_doc_len);
      scores[static_cast<std::size_t>(doc_id)] +=
          idf * (tf * (index.k1 + 1.0)) / (tf + norm);
    }
  }
  return scores;
}

namespace detail {

inline std::vector<TruncatedDistribution> proposals_for_instance(
    const McqaInstance& inst, const Corpus& corpus, const Bm25Index& index,
    const ScoreModel* retriever_ckpt, const TrainConfig& config) {
  const int keep = std::min<int>(config.p, static_cast<int>(corpus.size()));
  const std::vector<double> bm25_q = bm25_scores_all_docs(index, inst.question);
  std::vector<TruncatedDistribution> proposals;
  proposals.reserve(static_cast<std::size_t>(inst.num_options()));
  for (int j = 0; j < inst.num_options(); ++j) {
    const auto& answer = inst.options[static_cast<std::size_t>(j)];
    const std::vector<double> bm25_a = bm25_scores_all_docs(index, answer);
    const double beta = beta_correction(static_cast<int>(inst.question.size()),
                                        static_cast<int>(answer.size()));
    const QueryRecord query = inst.option_query(j);
    std::vector<double> scores(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const double ckpt =
          retriever_ckpt == nullptr
              ? 0.0
              : retriever_ckpt->score(query, static_cast<int>(d), corpus);
      scores[d] = hybrid_posterior_score(ckpt, bm25_q[d], bm25_a[d], config.tau, beta);
    }
    auto support = build_support(scores, keep);
    std::vector<double> support_scores;
    support_scores.reserve(support.size());
    for (int d : support) support_scores.push_back(scores[static_cast<std::size_t>(d)]);
    proposals.push_back(softmax_on_support(std::move(support), std::move(support_scores)));
  }
  return proposals;
}

}  // namespace detail

/// Rebuilds every query's top-P support and cached proposal scores. Pass a
/// null checkpoint for the first round, where the checkpoint term is
/// identically zero.
inline RoundCache reindex(const Corpus& corpus, const Bm25Index& index,
                          const std::vector<McqaInstance>& train,
                          const std::vector<McqaInstance>& eval,
                          const ScoreModel* retriever_ckpt, const TrainConfig& config) {
  validate_train_config(config, corpus.size());
  RoundCache cache;
  cache.train_proposals.reserve(train.size());
  for (const McqaInstance& inst : train)
    cache.train_proposals.push_back(
        detail::proposals_for_instance(inst, corpus, index, retriever_ckpt, config));
  cache.eval_proposals.reserve(eval.size());
  for (const McqaInstance& inst : eval)
    cache.eval_proposals.push_back(
        detail::proposals_for_instance(inst, corpus, index, retriever_ckpt, config));
  return cache;
}

struct StepRecord {
  std::int64_t step = 0;
  double alpha = 0.0;
  double objective = 0.0;
  double ess = 0.0;
  double kl = 0.0;
  double train_acc = 0.0;
};

struct EvalRecord {
  int round = 0;
  double eval_acc = 0.0;
};

struct MetricsTrace {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
};

struct Models {
  ScoreModel reader;
  ScoreModel retriever;
};

/// Mean KL(r || p_theta) over the cached supports of one instance.
inline double mean_support_kl(const std::vector<TruncatedDistribution>& proposals,
                              const ScoreModel& retriever, const McqaInstance& inst,
                              const Corpus& corpus) {
  double total = 0.0;
  for (int j = 0; j < inst.num_options(); ++j) {
    const auto& r = proposals[static_cast<std::size_t>(j)];
    const QueryRecord query = inst.option_query(j);
    std::vector<double> scores(r.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      scores[i] = retriever.score(query, r.support[i], corpus);
    const auto p = softmax_on_support(r.support, scores);
    total += kl_divergence(r, p);
  }
  return total / inst.num_options();
}

/// One batch update: per-instance priority samples, VOD gradients averaged
/// over the batch, one optimizer step per trainable block. Sampling seeds
/// derive from (seed, step, dataset index), so a duplicated instance in a
/// batch contributes an identical gradient.
inline StepRecord train_step(std::span<const int> batch, const RoundCache& cache,
                             const std::vector<McqaInstance>& train, const Corpus& corpus,
                             Models& models, double alpha, AdamState& reader_state,
                             AdamState& retriever_state, const TrainConfig& config,
                             std::int64_t global_step) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  StepRecord record;
  record.step = global_step;
  record.alpha = alpha;

  std::vector<double> reader_grad(static_cast<std::size_t>(models.reader.param_count()), 0.0);
  std::vector<double> retr_grad(static_cast<std::size_t>(models.retriever.param_count()), 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (int idx : batch) {
    const McqaInstance& inst = train[static_cast<std::size_t>(idx)];
    const auto& proposals = cache.train_proposals[static_cast<std::size_t>(idx)];
    const OptionRetrievalState state = make_option_state(
        proposals, config.k,
        rng::derive(config.seed, static_cast<std::uint64_t>(global_step),
                    static_cast<std::uint64_t>(idx)));

    BoundReport report;
    const GradientEstimate grad =
        mcqa_vod_gradient(alpha, state, models.reader, models.retriever, inst, corpus,
                          config.enumeration_cap, &report);
    // Maximizing the bound = descending its negative.
    for (std::size_t c = 0; c < reader_grad.size(); ++c)
      reader_grad[c] -= inv_batch * grad.reader_grad[c];
    for (std::size_t c = 0; c < retr_grad.size(); ++c)
      retr_grad[c] -= inv_batch * grad.retriever_grad[c];

    record.objective += inv_batch * report.value;
    record.ess += inv_batch * report.ess;
    record.kl += inv_batch * mean_support_kl(proposals, models.retriever, inst, corpus);

    const std::vector<double> values = mcqa_bound_all_options(
        alpha, state, models.reader, models.retriever, inst, corpus, config.enumeration_cap);
    record.train_acc += inv_batch * (predict(values) == inst.correct_index ? 1.0 : 0.0);
  }

  if (config.train_reader)
    optimizer_step(models.reader.params(), reader_grad, reader_state, config.reader_opt);
  if (config.train_retriever)
    optimizer_step(models.retriever.params(), retr_grad, retriever_state, config.retriever_opt);
  return record;
}

/// Accuracy of Monte-Carlo evaluation over a dataset slice.
inline double evaluate_accuracy(const std::vector<McqaInstance>& instances,
                                const std::vector<std::vector<TruncatedDistribution>>& proposals,
                                const Models& models, const Corpus& corpus,
                                const TrainConfig& config, std::uint64_t seed) {
  if (instances.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  double correct = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto factory = [&, i](std::uint64_t s) {
      return make_option_state(proposals[i], config.k, s);
    };
    const std::vector<double> probs =
        mc_eval(instances[i], models.reader, models.retriever, factory, config.c_eval,
                config.eval_alpha, rng::derive(seed, i), corpus, config.enumeration_cap);
    if (predict(probs) == instances[i].correct_index) correct += 1.0;
  }
  return correct / static_cast<double>(instances.size());
}

struct TrainResult {
  Models models;
  MetricsTrace trace;
};

inline TrainResult run_training(const TrainConfig& config, const Corpus& corpus,
                                const Bm25Index& index, const std::vector<McqaInstance>& train,
                                const std::vector<McqaInstance>& eval, Models initial) {
  validate_train_config(config, corpus.size());
  if (train.empty() || eval.empty())
    throw std::invalid_argument("run_training: train and eval splits must be non-empty");

  TrainResult result;
  result.models = std::move(initial);
  AdamState reader_state, retriever_state;

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = 0;

  for (int round = 0; round < config.rounds; ++round) {
    const ScoreModel* ckpt = round == 0 ? nullptr : &result.models.retriever;
    const RoundCache cache = reindex(corpus, index, train, eval, ckpt, config);

    // Deterministic reshuffle per round.
    rng::Stream shuffle(rng::derive(config.seed, 0xBA7C4, static_cast<std::uint64_t>(round)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);
    cursor = 0;

    for (int t = 0; t < config.steps_per_round; ++t) {
      const std::int64_t global_step =
          static_cast<std::int64_t>(round) * config.steps_per_round + t;
      const double alpha = alpha_schedule(global_step, config.steps_per_round, config.alpha);
      std::vector<int> batch;
      batch.reserve(static_cast<std::size_t>(config.batch_size));
      for (int b = 0; b < config.batch_size; ++b) {
        batch.push_back(order[cursor]);
        cursor = (cursor + 1) % order.size();
      }
      result.trace.steps.push_back(train_step(batch, cache, train, corpus, result.models, alpha,
                                              reader_state, retriever_state, config,
                                              global_step));
    }

    const double acc =
        evaluate_accuracy(eval, cache.eval_proposals, result.models, corpus, config,
                          rng::derive(config.seed, 0xE7A1, static_cast<std::uint64_t>(round)));
    result.trace.evals.push_back({round + 1, acc});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Query-only distillation: teach a student retriever p(d | q) to match the
// answer-aware teacher r(d | [q; a*]) by minimizing KL(teacher || student)
// on the teacher's support.
// ---------------------------------------------------------------------------

/// Loss and exact gradient: sum_d (p(d | q) - r(d)) grad f(d, q).
inline std::pair<double, std::vector<double>> distillation_loss_and_grad(
    const TruncatedDistribution& teacher, const ScoreModel& student, const QueryRecord& query_only,
    const Corpus& corpus) {
  std::vector<double> scores(teacher.size());
  for (std::size_t i = 0; i < teacher.size(); ++i)
    scores[i] = student.score(query_only, teacher.support[i], corpus);
  const auto student_dist = softmax_on_support(teacher.support, scores);
  const double loss = kl_divergence(teacher, student_dist);

  std::vector<double> grad(static_cast<std::size_t>(student.param_count()), 0.0);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double coeff =
        std::exp(student_dist.log_probs[i]) - std::exp(teacher.log_probs[i]);
    const auto g = student.score_and_grad(query_only, teacher.support[i], corpus).grad;
    for (std::size_t c = 0; c < grad.size(); ++c) grad[c] += coeff * g[c];
  }
  return {loss, std::move(grad)};
}

struct DistillConfig {
  int steps = 100;
  int p = 32;
  double tau = 5.0;
  double lr = 0.05;  // plain full-batch gradient descent; the mean KL is
                     // convex in the student's linear parameters, so a fixed
                     // small step descends monotonically
};

struct DistillResult {
  std::vector<double> kl_trace;  // mean KL before each step, plus the final value
};

/// Teacher proposals for [q; a*] from the hybrid score (checkpoint optional).
inline std::vector<TruncatedDistribution> build_teacher_proposals(
    const Corpus& corpus, const Bm25Index& index, const std::vector<McqaInstance>& questions,
    const ScoreModel* teacher_ckpt, int top_p, double tau) {
  std::vector<TruncatedDistribution> teachers;
  teachers.reserve(questions.size());
  const int keep = std::min<int>(top_p, static_cast<int>(corpus.size()));
  for (const McqaInstance& inst : questions) {
    const auto& answer = inst.options[static_cast<std::size_t>(inst.correct_index)];
    const QueryRecord query = inst.option_query(inst.correct_index);
    const std::vector<double> bm25_q = bm25_scores_all_docs(index, inst.question);
    const std::vector<double> bm25_a = bm25_scores_all_docs(index, answer);
    const double beta = beta_correction(static_cast<int>(inst.question.size()),
                                        static_cast<int>(answer.size()));
    std::vector<double> scores(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const double ckpt =
          teacher_ckpt == nullptr ? 0.0
                                  : teacher_ckpt->score(query, static_cast<int>(d), corpus);
      scores[d] = hybrid_posterior_score(ckpt, bm25_q[d], bm25_a[d], tau, beta);
    }
    auto support = build_support(scores, keep);
    std::vector<double> support_scores;
    support_scores.reserve(support.size());
    for (int d : support) support_scores.push_back(scores[static_cast<std::size_t>(d)]);
    teachers.push_back(softmax_on_support(std::move(support), std::move(support_scores)));
  }
  return teachers;
}

/// Full-batch distillation; kl_trace[t] is the mean KL entering step t.
inline DistillResult run_distillation(const Corpus& corpus,
                                      const std::vector<TruncatedDistribution>& teachers,
                                      const std::vector<McqaInstance>& questions,
                                      ScoreModel& student, const DistillConfig& config) {
  if (teachers.size() != questions.size())
    throw std::invalid_argument("run_distillation: one teacher per question required");
  if (questions.empty()) throw std::invalid_argument("run_distillation: empty dataset");

  DistillResult result;
  const double inv = 1.0 / static_cast<double>(questions.size());
  for (int step = 0; step <= config.steps; ++step) {
    double loss = 0.0;
    std::vector<double> grad(static_cast<std::size_t>(student.param_count()), 0.0);
    for (std::size_t i = 0; i < questions.size(); ++i) {
      const QueryRecord query_only = make_query(questions[i].question);
      auto [l, g] = distillation_loss_and_grad(teachers[i], student, query_only, corpus);
      loss += inv * l;
      for (std::size_t c = 0; c < grad.size(); ++c) grad[c] += inv * g[c];
    }
    result.kl_trace.push_back(loss);
    if (step == config.steps) break;
    for (std::size_t c = 0; c < grad.size(); ++c)
      student.params()[c] -= config.lr * grad[c];
  }
  return result;
}

/// Fraction of questions whose top-ranked document under the query-only
/// student is the planted evidence document.
inline double evidence_recall_at_1(const ScoreModel& student,
                                   const std::vector<McqaInstance>& questions,
                                   std::span<const int> evidence_ids, const Corpus& corpus) {
  if (questions.size() != evidence_ids.size())
    throw std::invalid_argument("evidence_recall_at_1: evidence list length mismatch");
  double hits = 0.0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const QueryRecord query_only = make_query(questions[i].question);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const double s = student.score(query_only, static_cast<int>(d), corpus);
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(d);
      }
    }
    if (best == evidence_ids[i]) hits += 1.0;
  }
  return hits / static_cast<double>(questions.size());
}

}  // namespace vod

#endif  // VOD_TRAINING_HPP
