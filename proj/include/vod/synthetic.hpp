#ifndef VOD_SYNTHETIC_HPP
#define VOD_SYNTHETIC_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vod/mcqa.hpp"
#include "vod/rng.hpp"
#include "vod/scoring.hpp"

// Planted-evidence multiple-choice task. Each question belongs to a topic;
// the topic's evidence document carries the topic tokens, the correct answer
// token, and the marker token "evid". The topic's distractor document shares
// topic tokens but plants a wrong answer (the topic's fixed confuser option,
// present in every question of that topic), so a reader without a trained
// retriever faces a deliberate two-way ambiguity. Retrieval recall is
// measurable because the evidence document is known per question.

namespace vod {

struct SyntheticConfig {
  int n_docs = 500;      // even: one evidence + one distractor per topic
  int n_train = 1000;
  int n_eval = 200;
  int n_options = 4;
  int n_answers = 40;
  int n_fillers = 30;
  int topic_tokens = 6;     // tokens defining a topic; evidence docs carry all
  int question_tokens = 4;  // topic tokens quoted by each question/distractor
};

struct SyntheticTask {
  Corpus corpus;
  std::vector<McqaInstance> train;
  std::vector<McqaInstance> eval;
  std::vector<int> train_evidence;  // evidence doc id per train question
  std::vector<int> eval_evidence;
};

namespace detail {

inline std::string topic_token(int topic, int slot) {
  return "t" + std::to_string(topic) + static_cast<char>('a' + slot);
}

inline std::string answer_token(int answer) { return "ans" + std::to_string(answer); }

inline std::string filler_token(rng::Stream& stream, const SyntheticConfig& config) {
  return "fill" + std::to_string(stream.below(static_cast<std::uint64_t>(config.n_fillers)));
}

}  // namespace detail

inline SyntheticTask generate_planted_task(const SyntheticConfig& config, std::uint64_t seed) {
  if (config.n_docs < 2 || config.n_docs % 2 != 0)
    throw std::invalid_argument("synthetic task: n_docs must be even and >= 2");
  if (config.n_options < 2 || config.n_answers < config.n_options + 2)
    throw std::invalid_argument("synthetic task: need at least n_options + 2 answers");
  if (config.question_tokens < 2 || config.question_tokens >= config.topic_tokens)
    throw std::invalid_argument("synthetic task: need 2 <= question_tokens < topic_tokens");

  const int n_topics = config.n_docs / 2;
  rng::Stream stream(rng::derive(seed, 0x5EED));

  // k distinct slots out of [0, topic_tokens).
  const auto pick_slots = [&](int k) {
    std::vector<int> slots(static_cast<std::size_t>(config.topic_tokens));
    for (int i = 0; i < config.topic_tokens; ++i) slots[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = slots.size(); i > 1; --i)
      std::swap(slots[i - 1], slots[stream.below(i)]);
    slots.resize(static_cast<std::size_t>(k));
    std::sort(slots.begin(), slots.end());
    return slots;
  };

  // Per-topic correct answer and a distinct confuser answer.
  std::vector<int> correct_answer(static_cast<std::size_t>(n_topics));
  std::vector<int> confuser_answer(static_cast<std::size_t>(n_topics));
  for (int topic = 0; topic < n_topics; ++topic) {
    const int c = static_cast<int>(stream.below(static_cast<std::uint64_t>(config.n_answers)));
    int w = c;
    while (w == c) w = static_cast<int>(stream.below(static_cast<std::uint64_t>(config.n_answers)));
    correct_answer[static_cast<std::size_t>(topic)] = c;
    confuser_answer[static_cast<std::size_t>(topic)] = w;
  }

  std::vector<std::vector<std::string>> docs;
  docs.reserve(static_cast<std::size_t>(config.n_docs));
  for (int topic = 0; topic < n_topics; ++topic) {
    // Evidence doc (id 2*topic): every topic token, correct answer, marker.
    std::vector<std::string> evidence;
    for (int slot = 0; slot < config.topic_tokens; ++slot)
      evidence.push_back(detail::topic_token(topic, slot));
    evidence.push_back(detail::answer_token(correct_answer[static_cast<std::size_t>(topic)]));
    evidence.push_back("evid");
    evidence.push_back(detail::filler_token(stream, config));
    docs.push_back(std::move(evidence));
    // Distractor doc (id 2*topic + 1): a topic-token subset, the confuser answer.
    std::vector<std::string> distractor;
    for (int slot : pick_slots(config.question_tokens))
      distractor.push_back(detail::topic_token(topic, slot));
    distractor.push_back(detail::answer_token(confuser_answer[static_cast<std::size_t>(topic)]));
    distractor.push_back(detail::filler_token(stream, config));
    distractor.push_back(detail::filler_token(stream, config));
    docs.push_back(std::move(distractor));
  }

  SyntheticTask task;
  task.corpus = make_corpus(std::move(docs));

  const auto make_question = [&](int qid) {
    const int topic = static_cast<int>(stream.below(static_cast<std::uint64_t>(n_topics)));
    const int c = correct_answer[static_cast<std::size_t>(topic)];
    const int w = confuser_answer[static_cast<std::size_t>(topic)];

    // A topic-token subset plus one filler.
    std::vector<std::string> question;
    for (int slot : pick_slots(config.question_tokens))
      question.push_back(detail::topic_token(topic, slot));
    question.push_back(detail::filler_token(stream, config));

    // Options: correct answer, the topic's confuser, and unique random others.
    std::vector<int> answers{c, w};
    while (static_cast<int>(answers.size()) < config.n_options) {
      const int a = static_cast<int>(stream.below(static_cast<std::uint64_t>(config.n_answers)));
      if (std::find(answers.begin(), answers.end(), a) == answers.end()) answers.push_back(a);
    }
    for (std::size_t i = answers.size(); i > 1; --i)
      std::swap(answers[i - 1], answers[stream.below(i)]);

    std::vector<std::vector<std::string>> options;
    int correct_index = 0;
    for (std::size_t j = 0; j < answers.size(); ++j) {
      options.push_back({detail::answer_token(answers[j])});
      if (answers[j] == c) correct_index = static_cast<int>(j);
    }
    return std::pair(make_mcqa_instance(qid, std::move(question), std::move(options),
                                        correct_index),
                     2 * topic);
  };

  task.train.reserve(static_cast<std::size_t>(config.n_train));
  task.train_evidence.reserve(static_cast<std::size_t>(config.n_train));
  for (int i = 0; i < config.n_train; ++i) {
    auto [inst, evidence] = make_question(i);
    task.train.push_back(std::move(inst));
    task.train_evidence.push_back(evidence);
  }
  task.eval.reserve(static_cast<std::size_t>(config.n_eval));
  task.eval_evidence.reserve(static_cast<std::size_t>(config.n_eval));
  for (int i = 0; i < config.n_eval; ++i) {
    auto [inst, evidence] = make_question(config.n_train + i);
    task.eval.push_back(std::move(inst));
    task.eval_evidence.push_back(evidence);
  }
  return task;
}

}  // namespace vod

#endif  // VOD_SYNTHETIC_HPP
