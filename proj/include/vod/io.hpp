#ifndef VOD_IO_HPP
#define VOD_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vod/mcqa.hpp"
#include "vod/scoring.hpp"
#include "vod/training.hpp"

// File formats:
//   corpus:      <doc_id>\t<text>                       one document per line
//   dataset:     <qid>\t<question>\t<optA>|<optB>|...\t<correct_index>
//   predictions: <qid>\t<predicted_index>\t<p_0,...,p_{M-1}>
//   metrics:     step,alpha,objective,ess,kl,train_acc then round,eval_acc
//   checkpoint:  versioned text header + one parameter per line

namespace vod {

namespace io_detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char ch : line) {
    if (ch == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  parts.push_back(current);
  return parts;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io_detail

inline Corpus load_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
  std::vector<std::vector<std::string>> token_lists;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = io_detail::split(line, '\t');
    if (parts.size() != 2)
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": expected <doc_id>\\t<text>");
    const int id = std::stoi(parts[0]);
    if (id != static_cast<int>(token_lists.size()))
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": doc ids must be contiguous from 0");
    token_lists.push_back(tokenize(parts[1]));
    if (token_lists.back().empty())
      throw std::runtime_error("corpus line " + std::to_string(line_no) + ": empty document");
  }
  return make_corpus(std::move(token_lists));
}

inline void save_corpus_file(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path.string());
  for (const Doc& doc : corpus.docs) {
    out << doc.id << '\t';
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << doc.tokens[i];
    }
    out << '\n';
  }
}

inline std::vector<McqaInstance> load_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
  std::vector<McqaInstance> instances;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = io_detail::split(line, '\t');
    if (parts.size() != 4)
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": expected <qid>\\t<question>\\t<options>\\t<correct_index>");
    std::vector<std::vector<std::string>> options;
    for (const std::string& raw : io_detail::split(parts[2], '|')) options.push_back(tokenize(raw));
    try {
      instances.push_back(make_mcqa_instance(std::stoi(parts[0]), tokenize(parts[1]),
                                             std::move(options), std::stoi(parts[3])));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return instances;
}

inline void save_dataset_file(const std::filesystem::path& path,
                              const std::vector<McqaInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path.string());
  const auto join = [](const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) s.push_back(' ');
      s += tokens[i];
    }
    return s;
  };
  for (const McqaInstance& inst : instances) {
    out << inst.qid << '\t' << join(inst.question) << '\t';
    for (int j = 0; j < inst.num_options(); ++j) {
      if (j > 0) out << '|';
      out << join(inst.options[static_cast<std::size_t>(j)]);
    }
    out << '\t' << inst.correct_index << '\n';
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const ScoreModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << "vod-checkpoint 1\n";
  if (model.kind() == ScoreKind::kLinearFeatures) {
    out << "kind linear\n";
    out << "vocab";
    for (const std::string& t : model.marker_vocab()) out << ' ' << t;
    out << '\n';
  } else {
    out << "kind dual\n";
    out << "dim " << model.embedding_dim() << ' ' << model.embedding_rows() << '\n';
  }
  out << "scale " << io_detail::format_double(model.score_scale()) << '\n';
  out << "params " << model.param_count() << '\n';
  for (double p : model.params()) out << io_detail::format_double(p) << '\n';
}

/// The BM25 index is not serialized; linear models re-attach the one passed
/// in (it is derived from the corpus).
inline ScoreModel load_checkpoint(const std::filesystem::path& path,
                                  std::shared_ptr<const Bm25Index> bm25) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string word;
  int version = 0;
  in >> word >> version;
  if (word != "vod-checkpoint" || version != 1)
    throw std::runtime_error("checkpoint: unsupported header in " + path.string());

  std::string key, kind;
  in >> key >> kind;
  if (key != "kind") throw std::runtime_error("checkpoint: missing kind");

  ScoreModel model;
  if (kind == "linear") {
    std::string rest;
    in >> key;  // "vocab"
    std::getline(in, rest);
    std::istringstream vocab_stream(rest);
    std::vector<std::string> vocab;
    std::string token;
    while (vocab_stream >> token) vocab.push_back(token);
    if (!bm25) throw std::runtime_error("checkpoint: linear model needs a BM25 index");
    model = ScoreModel::linear_features(std::move(vocab), std::move(bm25));
  } else if (kind == "dual") {
    int dim = 0, rows = 0;
    in >> key >> dim >> rows;
    model = ScoreModel::dual_embedding(dim, rows, 0, 0.0);
  } else {
    throw std::runtime_error("checkpoint: unknown kind '" + kind + "'");
  }

  double scale = 1.0;
  in >> key >> scale;
  if (key != "scale") throw std::runtime_error("checkpoint: missing scale");
  model.set_score_scale(scale);

  int count = 0;
  in >> key >> count;
  if (key != "params" || count != model.param_count())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (int i = 0; i < count; ++i) {
    if (!(in >> model.params()[static_cast<std::size_t>(i)]))
      throw std::runtime_error("checkpoint: truncated parameter list");
  }
  return model;
}

inline void write_metrics_csv(const std::filesystem::path& path, const MetricsTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics file: " + path.string());
  out << "step,alpha,objective,ess,kl,train_acc\n";
  char buf[200];
  for (const StepRecord& r : trace.steps) {
    std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  static_cast<long long>(r.step), r.alpha, r.objective, r.ess, r.kl, r.train_acc);
    out << buf;
  }
  out << "round,eval_acc\n";
  for (const EvalRecord& r : trace.evals) {
    std::snprintf(buf, sizeof buf, "%d,%.10g\n", r.round, r.eval_acc);
    out << buf;
  }
}

struct Prediction {
  int qid = 0;
  int predicted = 0;
  std::vector<double> probabilities;
};

inline void write_predictions(const std::filesystem::path& path,
                              const std::vector<Prediction>& predictions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions: " + path.string());
  for (const Prediction& p : predictions) {
    out << p.qid << '\t' << p.predicted << '\t';
    for (std::size_t j = 0; j < p.probabilities.size(); ++j) {
      if (j > 0) out << ',';
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.10g", p.probabilities[j]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace vod

#endif  // VOD_IO_HPP
