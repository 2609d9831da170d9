#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/instances.hpp"
#include "vod/bounds.hpp"
#include "vod/gradients.hpp"
#include "vod/rng.hpp"

using namespace vod;

namespace {

/// Exact grad log p(d_target | q) on a full support via the softmax rule.
std::vector<double> exact_softmax_logprob_grad(const test::ModelProblem& p, int target) {
  const auto inst = p.instance();
  std::vector<double> scores(p.support.size());
  for (std::size_t i = 0; i < p.support.size(); ++i) scores[i] = inst.f_theta(p.support[i]);
  const auto probs = softmax(scores);
  std::vector<double> out = inst.f_theta_grad(target);
  for (std::size_t i = 0; i < p.support.size(); ++i) {
    const auto g = inst.f_theta_grad(p.support[i]);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] -= probs[i] * g[c];
  }
  return out;
}

}  // namespace

TEST_CASE("finite differences on known functions", "[gradients]") {
  const std::vector<double> a{2.0, -1.5, 0.25};
  const auto linear = [&](std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += a[i] * x[i];
    return acc;
  };
  const std::vector<double> theta{0.3, 0.7, -2.0};
  const auto grad = finite_difference(linear, theta, 1e-4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(grad[i] == Catch::Approx(a[i]).margin(1e-9));

  const auto quadratic = [](std::span<const double> x) { return x[0] * x[0]; };
  const std::vector<double> at3{3.0};
  CHECK(finite_difference(quadratic, at3, 1e-4)[0] == Catch::Approx(6.0).margin(1e-7));

  CHECK_THROWS_AS(finite_difference(quadratic, at3, 0.0), std::invalid_argument);
  const auto bad = [](std::span<const double>) { return std::nan(""); };
  CHECK_THROWS_AS(finite_difference(bad, at3, 1e-4), std::runtime_error);
}

TEST_CASE("retriever log-prob correction", "[gradients]") {
  rng::Stream stream(61);

  SECTION("a single sample collapses to zero") {
    auto p = test::random_model_problem(6, stream);
    const auto inst = p.instance();
    const auto r = proposal_distribution(inst);
    const auto sample = priority_sample(r, 1, 3);
    const auto input = make_bound_input(0.0, sample, inst);
    const auto grads = collect_sample_gradients(sample, inst);
    const auto h = retriever_logprob_grad(sample, input.log_zeta, grads.retriever, 0);
    for (double v : h) CHECK(std::abs(v) < 1e-14);
  }

  SECTION("matched scorers reduce the weights to s") {
    auto p = test::random_model_problem(6, stream);
    // Make zeta identically one by copying f_theta into the proposal table.
    const auto inst0 = p.instance();
    for (std::size_t i = 0; i < p.f_phi_table.size(); ++i)
      p.f_phi_table[i] = inst0.f_theta(static_cast<int>(i));
    const auto inst = p.instance();
    const auto r = proposal_distribution(inst);
    const auto sample = priority_sample(r, 4, 9);
    const auto input = make_bound_input(0.0, sample, inst);
    const auto grads = collect_sample_gradients(sample, inst);
    const std::size_t target = 2;
    const auto h = retriever_logprob_grad(sample, input.log_zeta, grads.retriever, target);

    std::vector<double> expected = grads.retriever[target];
    for (std::size_t j = 0; j < sample.size(); ++j)
      for (std::size_t c = 0; c < expected.size(); ++c)
        expected[c] -= sample.norm_weights[j] * grads.retriever[j][c];
    for (std::size_t c = 0; c < expected.size(); ++c)
      CHECK(h[c] == Catch::Approx(expected[c]).margin(1e-12));
  }

  SECTION("exhaustive samples recover the exact softmax gradient") {
    auto p = test::random_model_problem(7, stream);
    const auto inst = p.instance();
    const auto sample = test::exhaustive_sample(inst, 21);
    const auto input = make_bound_input(0.0, sample, inst);
    const auto grads = collect_sample_gradients(sample, inst);
    for (std::size_t t = 0; t < sample.size(); ++t) {
      const auto h = retriever_logprob_grad(sample, input.log_zeta, grads.retriever, t);
      const auto exact = exact_softmax_logprob_grad(p, sample.indices[t]);
      for (std::size_t c = 0; c < h.size(); ++c)
        CHECK(std::abs(h[c] - exact[c]) <= 1e-9);
    }
  }

  SECTION("target index out of range") {
    auto p = test::random_model_problem(4, stream);
    const auto inst = p.instance();
    const auto sample = test::exhaustive_sample(inst, 2);
    const auto input = make_bound_input(0.0, sample, inst);
    const auto grads = collect_sample_gradients(sample, inst);
    CHECK_THROWS_AS(retriever_logprob_grad(sample, input.log_zeta, grads.retriever, 99),
                    std::out_of_range);
  }
}

TEST_CASE("exhaustive VOD gradient equals the exact bound gradient", "[gradients]") {
  rng::Stream stream(62);
  for (int rep = 0; rep < 10; ++rep) {
    const bool dual = rep % 2 == 1;
    auto p = test::random_model_problem(6, stream, dual);
    const auto inst = p.instance();
    const auto sample = test::exhaustive_sample(inst, 31 + rep);
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const auto input = make_bound_input(alpha, sample, inst);
      const auto grads = collect_sample_gradients(sample, inst);
      const auto estimate = vod_gradient(alpha, input, grads.reader, grads.retriever);
      const auto exact = exact_rvb_gradient(alpha, inst);
      for (std::size_t c = 0; c < estimate.reader_grad.size(); ++c)
        CHECK(std::abs(estimate.reader_grad[c] - exact.reader_grad[c]) <= 1e-9);
      for (std::size_t c = 0; c < estimate.retriever_grad.size(); ++c)
        CHECK(std::abs(estimate.retriever_grad[c] - exact.retriever_grad[c]) <= 1e-9);
    }
  }
}

TEST_CASE("alpha = 1 with posterior-matching proposal is the disjoint update", "[gradients]") {
  rng::Stream stream(63);
  auto p = test::random_model_problem(6, stream);
  // Proposal = retriever distribution: f_phi table = f_theta scores.
  const auto inst0 = p.instance();
  for (std::size_t i = 0; i < p.f_phi_table.size(); ++i)
    p.f_phi_table[i] = inst0.f_theta(static_cast<int>(i));
  const auto inst = p.instance();
  const auto sample = test::exhaustive_sample(inst, 4);
  const auto input = make_bound_input(1.0, sample, inst);
  const auto grads = collect_sample_gradients(sample, inst);
  const auto estimate = vod_gradient(1.0, input, grads.reader, grads.retriever);

  // Reader block: E_r[grad log p(a | d, q)].
  const auto r = proposal_distribution(inst);
  std::vector<double> expected_reader(estimate.reader_grad.size(), 0.0);
  for (std::size_t i = 0; i < r.item_ids.size(); ++i) {
    const auto g = inst.reader_grad(r.item_ids[i]);
    for (std::size_t c = 0; c < g.size(); ++c) expected_reader[c] += r.probs[i] * g[c];
  }
  for (std::size_t c = 0; c < expected_reader.size(); ++c)
    CHECK(estimate.reader_grad[c] == Catch::Approx(expected_reader[c]).margin(1e-9));

  // Retriever block: -grad KL(r || p_theta) = sum_d r(d) grad log p(d | q);
  // with r = p_theta it vanishes.
  for (double v : estimate.retriever_grad) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("retriever gradient vanishes for document-independent score grads", "[gradients]") {
  rng::Stream stream(64);
  auto p = test::random_table_problem(6, stream);
  auto inst = p.instance();
  const std::vector<double> shared{1.0, -2.0, 0.5};
  inst.reader_grad = [&](int) { return std::vector<double>{0.0}; };
  inst.f_theta_grad = [&](int) { return shared; };
  for (double alpha : {0.0, 0.5, 1.0}) {
    const auto exact = exact_rvb_gradient(alpha, inst);
    for (double v : exact.retriever_grad) CHECK(std::abs(v) <= 1e-12);
  }
}

TEST_CASE("exact gradient matches finite differences of the exact bound", "[gradients]") {
  rng::Stream stream(65);
  for (const bool dual : {false, true}) {
    auto p = test::random_model_problem(6, stream, dual);
    const auto inst = p.instance();
    for (double alpha : {0.0, 0.5, 1.0}) {
      const auto exact = exact_rvb_gradient(alpha, inst);

      const auto reader_objective = [&](std::span<const double> theta) {
        auto probe = p;
        probe.reader.set_params(theta);
        return exact_rvb(alpha, probe.instance());
      };
      const auto fd_reader = finite_difference(reader_objective, p.reader.params(), 1e-6);
      for (std::size_t c = 0; c < fd_reader.size(); ++c)
        CHECK(test::rel_err(exact.reader_grad[c], fd_reader[c]) <= 1e-5);

      const auto retr_objective = [&](std::span<const double> theta) {
        auto probe = p;
        probe.retriever.set_params(theta);
        return exact_rvb(alpha, probe.instance());
      };
      const auto fd_retr = finite_difference(retr_objective, p.retriever.params(), 1e-6);
      for (std::size_t c = 0; c < fd_retr.size(); ++c)
        CHECK(test::rel_err(exact.retriever_grad[c], fd_retr[c]) <= 1e-5);
    }
  }
}

TEST_CASE("alpha = 0 posterior proposal recovers the marginal's gradient", "[gradients]") {
  rng::Stream stream(66);
  auto p = test::random_model_problem(5, stream);
  // f_phi = reader + f_theta makes r the exact posterior.
  const auto inst0 = p.instance();
  for (std::size_t i = 0; i < p.f_phi_table.size(); ++i)
    p.f_phi_table[i] = inst0.reader_loglik(static_cast<int>(i)) +
                       inst0.f_theta(static_cast<int>(i));
  const auto inst = p.instance();
  const auto exact = exact_rvb_gradient(0.0, inst);

  const auto mll_reader = [&](std::span<const double> theta) {
    auto probe = p;
    probe.reader.set_params(theta);
    return exact_marginal_log_likelihood(probe.instance());
  };
  const auto fd = finite_difference(mll_reader, p.reader.params(), 1e-6);
  for (std::size_t c = 0; c < fd.size(); ++c)
    CHECK(test::rel_err(exact.reader_grad[c], fd[c]) <= 1e-5);
}

TEST_CASE("truncated exhaustive gradient matches the REALM objective's slope", "[gradients]") {
  rng::Stream stream(67);
  auto p = test::random_model_problem(8, stream);
  const auto inst_full = p.instance();
  std::vector<double> f_phi_scores(p.support.size());
  for (std::size_t i = 0; i < p.support.size(); ++i)
    f_phi_scores[i] = inst_full.f_phi(p.support[i]);
  const auto top = build_support(f_phi_scores, 4);
  p.support.assign(top.begin(), top.end());

  const auto inst = p.instance();
  const auto sample = test::exhaustive_sample(inst, 13);
  const auto input = make_bound_input(0.0, sample, inst);
  const auto grads = collect_sample_gradients(sample, inst);
  const auto estimate = vod_gradient(0.0, input, grads.reader, grads.retriever);

  const auto realm_fn = [&](std::span<const double> theta) {
    auto probe = p;
    probe.retriever.set_params(theta);
    const auto probe_inst = probe.instance();
    return realm_objective(test::exhaustive_sample(probe_inst, 13), probe_inst).value;
  };
  const auto fd = finite_difference(realm_fn, p.retriever.params(), 1e-6);
  for (std::size_t c = 0; c < fd.size(); ++c)
    CHECK(test::rel_err(estimate.retriever_grad[c], fd[c]) <= 1e-5);
}

TEST_CASE("no normalizing constant inside the gradient path", "[gradients]") {
  rng::Stream stream(68);
  const auto p = test::random_table_problem(40, stream);
  auto inst = p.instance();
  inst.reader_grad = [](int) { return std::vector<double>{0.5}; };

  int grad_calls_outside = 0;
  const auto r = proposal_distribution(inst);
  const auto sample = priority_sample(r, 6, 5);
  inst.f_theta_grad = [&](int d) {
    if (std::find(sample.indices.begin(), sample.indices.end(), d) == sample.indices.end())
      ++grad_calls_outside;
    return std::vector<double>{static_cast<double>(d), 1.0};
  };

  const auto input = make_bound_input(0.5, sample, inst);
  const auto grads = collect_sample_gradients(sample, inst);
  const auto estimate = vod_gradient(0.5, input, grads.reader, grads.retriever);
  CHECK(estimate.retriever_grad.size() == 2);
  CHECK(grad_calls_outside == 0);
}

TEST_CASE("gradient argument validation", "[gradients]") {
  rng::Stream stream(69);
  const auto p = test::random_model_problem(4, stream);
  const auto inst = p.instance();
  const auto sample = test::exhaustive_sample(inst, 1);
  const auto input = make_bound_input(0.5, sample, inst);
  const auto grads = collect_sample_gradients(sample, inst);

  CHECK_THROWS_AS(vod_gradient(1.5, input, grads.reader, grads.retriever), std::invalid_argument);
  auto short_list = grads.reader;
  short_list.pop_back();
  CHECK_THROWS_AS(vod_gradient(0.5, input, short_list, grads.retriever), std::invalid_argument);

  LatentInstance no_hooks = inst;
  no_hooks.reader_grad = nullptr;
  CHECK_THROWS_AS(exact_rvb_gradient(0.5, no_hooks), std::invalid_argument);
}
