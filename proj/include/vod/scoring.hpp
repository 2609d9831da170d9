#ifndef VOD_SCORING_HPP
#define VOD_SCORING_HPP

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vod/rng.hpp"

// Corpus handling, Okapi BM25, and the pluggable score models that stand in
// for the reader/retriever scorers at desk scale. Both model kinds expose
// analytic parameter gradients so estimators can be checked against finite
// differences.

namespace vod {

/// Lowercase, split on non-alphanumeric runs, drop empties.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct Doc {
  int id = 0;
  std::vector<std::string> tokens;
  std::unordered_set<std::string> token_set;  // built once, read-only afterwards
};

struct Corpus {
  std::vector<Doc> docs;

  std::size_t size() const { return docs.size(); }

  const Doc& doc(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= docs.size())
      throw std::invalid_argument("corpus: unknown doc id");
    return docs[static_cast<std::size_t>(id)];
  }
};

/// Doc ids must be contiguous from 0; empty documents are rejected.
inline Corpus make_corpus(std::vector<std::vector<std::string>> token_lists) {
  Corpus corpus;
  corpus.docs.reserve(token_lists.size());
  for (std::size_t i = 0; i < token_lists.size(); ++i) {
    if (token_lists[i].empty()) throw std::invalid_argument("corpus: empty document");
    Doc doc;
    doc.id = static_cast<int>(i);
    doc.tokens = std::move(token_lists[i]);
    doc.token_set.insert(doc.tokens.begin(), doc.tokens.end());
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

struct Bm25Index {
  // term -> (doc_id, term frequency), doc ids ascending
  std::unordered_map<std::string, std::vector<std::pair<int, int>>> postings;
  std::vector<int> doc_lengths;
  double avg_doc_len = 0.0;
  int n_docs = 0;
  double k1 = 1.2;
  double b = 0.75;
};

inline Bm25Index build_bm25_index(const Corpus& corpus, double k1 = 1.2, double b = 0.75) {
  if (corpus.docs.empty()) throw std::invalid_argument("build_bm25_index: empty corpus");
  Bm25Index index;
  index.k1 = k1;
  index.b = b;
  index.n_docs = static_cast<int>(corpus.size());
  index.doc_lengths.reserve(corpus.size());
  std::size_t total_len = 0;
  for (const Doc& doc : corpus.docs) {
    index.doc_lengths.push_back(static_cast<int>(doc.tokens.size()));
    total_len += doc.tokens.size();
    std::unordered_map<std::string, int> tf;
    for (const std::string& t : doc.tokens) ++tf[t];
    for (const auto& [term, count] : tf) index.postings[term].push_back({doc.id, count});
  }
  for (auto& [term, list] : index.postings)
    std::sort(list.begin(), list.end());
  index.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(corpus.size());
  return index;
}

inline int bm25_term_frequency(const Bm25Index& index, const std::string& term, int doc_id) {
  const auto it = index.postings.find(term);
  if (it == index.postings.end()) return 0;
  const auto& list = it->second;
  const auto pos = std::lower_bound(list.begin(), list.end(), std::make_pair(doc_id, 0));
  if (pos == list.end() || pos->first != doc_id) return 0;
  return pos->second;
}

/// Okapi BM25 with the +1-inside-log IDF, which keeps every contribution
/// non-negative. Duplicate query terms contribute once per occurrence.
inline double bm25_score(const Bm25Index& index, std::span<const std::string> query_tokens,
                         int doc_id) {
  if (doc_id < 0 || doc_id >= index.n_docs)
    throw std::invalid_argument("bm25_score: unknown doc id");
  const double len = index.doc_lengths[static_cast<std::size_t>(doc_id)];
  const double norm = index.k1 * (1.0 - index.b + index.b * len / index.avg_doc_len);
  double score = 0.0;
  for (const std::string& term : query_tokens) {
    const auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const int tf = bm25_term_frequency(index, term, doc_id);
    if (tf == 0) continue;
    const double idf = std::log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5));
    score += idf * (tf * (index.k1 + 1.0)) / (tf + norm);
  }
  return score;
}

/// beta = 1 + 0.5 * max(0, ln(len_q / len_a)): keeps a long question's BM25
/// score from drowning out the answer's.
inline double beta_correction(int len_q, int len_a) {
  if (len_q < 1 || len_a < 1) throw std::invalid_argument("beta_correction: lengths must be >= 1");
  const double ratio = static_cast<double>(len_q) / static_cast<double>(len_a);
  return 1.0 + 0.5 * std::max(0.0, std::log(ratio));
}

/// ckpt + tau^-1 * (bm25_q + beta * bm25_a) — the proposal score that mixes a
/// retriever checkpoint with the keyword baseline.
inline double hybrid_posterior_score(double ckpt_score, double bm25_q, double bm25_a, double tau,
                                     double beta) {
  if (!(tau > 0.0)) throw std::invalid_argument("hybrid_posterior_score: tau must be > 0");
  return ckpt_score + (bm25_q + beta * bm25_a) / tau;
}

struct QueryRecord {
  std::vector<std::string> question;
  std::vector<std::string> answer;    // empty for query-only records
  std::vector<std::string> combined;  // [question; answer]
};

inline QueryRecord make_query(std::vector<std::string> question,
                              std::vector<std::string> answer = {}) {
  if (question.empty()) throw std::invalid_argument("make_query: empty question");
  QueryRecord rec;
  rec.combined = question;
  rec.combined.insert(rec.combined.end(), answer.begin(), answer.end());
  rec.question = std::move(question);
  rec.answer = std::move(answer);
  return rec;
}

enum class ScoreKind { kLinearFeatures, kDualEmbedding };

struct ScoreGrad {
  double score = 0.0;
  std::vector<double> grad;  // d score / d params
};

/// Parametric score over (query, document) pairs.
///
/// kLinearFeatures: theta . phi(q, d) with
///   phi = [shared-token count, shared count / |q|, BM25(q, d),
///          1[t in d] for each marker-vocabulary term t].
/// kDualEmbedding: dot(e_q, e_d) where each side mean-pools hashed per-token
///   embeddings from a single shared table.
///
/// An optional fixed score scale multiplies both score and gradient.
class ScoreModel {
 public:
  static ScoreModel linear_features(std::vector<std::string> marker_vocab,
                                    std::shared_ptr<const Bm25Index> bm25) {
    ScoreModel model;
    model.kind_ = ScoreKind::kLinearFeatures;
    model.marker_vocab_ = std::move(marker_vocab);
    model.bm25_ = std::move(bm25);
    if (!model.bm25_) throw std::invalid_argument("ScoreModel: BM25 index required");
    model.params_.assign(3 + model.marker_vocab_.size(), 0.0);
    return model;
  }

  static ScoreModel dual_embedding(int dim = 16, int rows = 32, std::uint64_t init_seed = 0,
                                   double init_scale = 0.1) {
    if (dim < 1 || rows < 1) throw std::invalid_argument("ScoreModel: dim and rows must be >= 1");
    ScoreModel model;
    model.kind_ = ScoreKind::kDualEmbedding;
    model.dim_ = dim;
    model.rows_ = rows;
    model.params_.resize(static_cast<std::size_t>(dim) * static_cast<std::size_t>(rows));
    rng::Stream stream(init_seed);
    for (double& p : model.params_) p = init_scale * stream.normal();
    return model;
  }

  ScoreKind kind() const { return kind_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }

  void set_params(std::span<const double> values) {
    if (values.size() != params_.size())
      throw std::invalid_argument("ScoreModel: parameter dimension mismatch");
    std::copy(values.begin(), values.end(), params_.begin());
  }

  double score_scale() const { return scale_; }
  void set_score_scale(double scale) {
    if (!std::isfinite(scale)) throw std::invalid_argument("ScoreModel: non-finite scale");
    scale_ = scale;
  }

  const std::vector<std::string>& marker_vocab() const { return marker_vocab_; }
  int embedding_dim() const { return dim_; }
  int embedding_rows() const { return rows_; }

  /// Number of score/score_and_grad calls since the last reset. Diagnostic
  /// used by the complexity tests.
  std::uint64_t eval_count() const { return eval_count_.load(std::memory_order_relaxed); }
  void reset_eval_count() const { eval_count_.store(0, std::memory_order_relaxed); }

  std::vector<double> features(const QueryRecord& query, int doc_id, const Corpus& corpus) const {
    if (kind_ != ScoreKind::kLinearFeatures)
      throw std::invalid_argument("ScoreModel: features() requires the linear kind");
    const Doc& doc = corpus.doc(doc_id);
    std::vector<double> phi(params_.size(), 0.0);
    std::unordered_set<std::string_view> seen;
    int shared = 0;
    for (const std::string& t : query.combined) {
      if (doc.token_set.count(t) && seen.insert(t).second) ++shared;
    }
    phi[0] = static_cast<double>(shared);
    phi[1] = static_cast<double>(shared) / static_cast<double>(query.combined.size());
    phi[2] = bm25_score(*bm25_, query.combined, doc_id);
    for (std::size_t v = 0; v < marker_vocab_.size(); ++v)
      phi[3 + v] = doc.token_set.count(marker_vocab_[v]) ? 1.0 : 0.0;
    return phi;
  }

  double score(const QueryRecord& query, int doc_id, const Corpus& corpus) const {
    eval_count_.fetch_add(1, std::memory_order_relaxed);
    if (kind_ == ScoreKind::kLinearFeatures) {
      const std::vector<double> phi = features(query, doc_id, corpus);
      double acc = 0.0;
      for (std::size_t i = 0; i < phi.size(); ++i) acc += params_[i] * phi[i];
      return scale_ * acc;
    }
    std::vector<double> e_q(static_cast<std::size_t>(dim_), 0.0);
    std::vector<double> e_d(static_cast<std::size_t>(dim_), 0.0);
    pooled_embedding(query.combined, e_q);
    pooled_embedding(corpus.doc(doc_id).tokens, e_d);
    double acc = 0.0;
    for (int c = 0; c < dim_; ++c)
      acc += e_q[static_cast<std::size_t>(c)] * e_d[static_cast<std::size_t>(c)];
    return scale_ * acc;
  }

  ScoreGrad score_and_grad(const QueryRecord& query, int doc_id, const Corpus& corpus) const {
    eval_count_.fetch_add(1, std::memory_order_relaxed);
    ScoreGrad out;
    out.grad.assign(params_.size(), 0.0);
    if (kind_ == ScoreKind::kLinearFeatures) {
      const std::vector<double> phi = features(query, doc_id, corpus);
      double acc = 0.0;
      for (std::size_t i = 0; i < phi.size(); ++i) {
        acc += params_[i] * phi[i];
        out.grad[i] = scale_ * phi[i];
      }
      out.score = scale_ * acc;
      return out;
    }
    const Doc& doc = corpus.doc(doc_id);
    std::vector<double> e_q(static_cast<std::size_t>(dim_), 0.0);
    std::vector<double> e_d(static_cast<std::size_t>(dim_), 0.0);
    pooled_embedding(query.combined, e_q);
    pooled_embedding(doc.tokens, e_d);
    double acc = 0.0;
    for (int c = 0; c < dim_; ++c)
      acc += e_q[static_cast<std::size_t>(c)] * e_d[static_cast<std::size_t>(c)];
    out.score = scale_ * acc;
    // Product rule: both sides read the same table.
    const double inv_q = 1.0 / static_cast<double>(query.combined.size());
    for (const std::string& t : query.combined) {
      const std::size_t row = token_row(t);
      for (int c = 0; c < dim_; ++c)
        out.grad[row * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(c)] +=
            scale_ * inv_q * e_d[static_cast<std::size_t>(c)];
    }
    const double inv_d = 1.0 / static_cast<double>(doc.tokens.size());
    for (const std::string& t : doc.tokens) {
      const std::size_t row = token_row(t);
      for (int c = 0; c < dim_; ++c)
        out.grad[row * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(c)] +=
            scale_ * inv_d * e_q[static_cast<std::size_t>(c)];
    }
    return out;
  }

 private:
  std::size_t token_row(const std::string& token) const {
    return static_cast<std::size_t>(rng::mix64(rng::hash_string(token)) %
                                    static_cast<std::uint64_t>(rows_));
  }

  void pooled_embedding(const std::vector<std::string>& tokens, std::vector<double>& out) const {
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (const std::string& t : tokens) {
      const std::size_t row = token_row(t);
      for (int c = 0; c < dim_; ++c)
        out[static_cast<std::size_t>(c)] +=
            inv * params_[row * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(c)];
    }
  }

  ScoreKind kind_ = ScoreKind::kLinearFeatures;
  std::vector<double> params_;
  std::vector<std::string> marker_vocab_;
  std::shared_ptr<const Bm25Index> bm25_;
  int dim_ = 0;
  int rows_ = 0;
  double scale_ = 1.0;
  mutable std::atomic<std::uint64_t> eval_count_{0};

 public:
  ScoreModel() = default;
  ScoreModel(const ScoreModel& other)
      : kind_(other.kind_),
        params_(other.params_),
        marker_vocab_(other.marker_vocab_),
        bm25_(other.bm25_),
        dim_(other.dim_),
        rows_(other.rows_),
        scale_(other.scale_),
        eval_count_(other.eval_count_.load(std::memory_order_relaxed)) {}
  ScoreModel& operator=(const ScoreModel& other) {
    if (this != &other) {
      kind_ = other.kind_;
      params_ = other.params_;
      marker_vocab_ = other.marker_vocab_;
      bm25_ = other.bm25_;
      dim_ = other.dim_;
      rows_ = other.rows_;
      scale_ = other.scale_;
      eval_count_.store(other.eval_count_.load(std::memory_order_relaxed),
                        std::memory_order_relaxed);
    }
    return *this;
  }
  ScoreModel(ScoreModel&& other) noexcept
      : kind_(other.kind_),
        params_(std::move(other.params_)),
        marker_vocab_(std::move(other.marker_vocab_)),
        bm25_(std::move(other.bm25_)),
        dim_(other.dim_),
        rows_(other.rows_),
        scale_(other.scale_),
        eval_count_(other.eval_count_.load(std::memory_order_relaxed)) {}
  ScoreModel& operator=(ScoreModel&& other) noexcept {
    if (this != &other) {
      kind_ = other.kind_;
      params_ = std::move(other.params_);
      marker_vocab_ = std::move(other.marker_vocab_);
      bm25_ = std::move(other.bm25_);
      dim_ = other.dim_;
      rows_ = other.rows_;
      scale_ = other.scale_;
      eval_count_.store(other.eval_count_.load(std::memory_order_relaxed),
                        std::memory_order_relaxed);
    }
    return *this;
  }
};

}  // namespace vod

#endif  // VOD_SCORING_HPP
