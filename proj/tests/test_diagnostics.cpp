// Copyright 2026 The SAPALM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "sapalm/diagnostics.hpp"
#include "sapalm/engine.hpp"
#include "sapalm/factorization.hpp"
#include "sapalm/problem.hpp"

using namespace sapalm;

namespace {

// One scalar block, f = 0.5 x^2, r = lambda |x|.
GenericProblem scalar_problem(double lambda) {
  GenericProblem::ValueFn value = [](const BlockVector& x) {
    const double v = x.load(0, 0);
    return 0.5 * v * v;
  };
  GenericProblem::BlockGradFn grad = [](std::size_t, const BlockVector& x,
                                        std::span<double> out) {
    out[0] = x.load(0, 0);
  };
  GenericProblem::BlockLipFn lip = [](std::size_t, const BlockVector&) {
    return 1.0;
  };
  RegularizerParams params;
  params.lambda = lambda;
  std::vector<ScalarRegularizer> regs{make_scalar_regularizer("l1", params)};
  return GenericProblem(BlockLayout({1}), value, grad, regs, lip);
}

// m scalar blocks, f = sum of coordinates, r = 0. The linear smooth part
// makes the objective easy to script while keeping gradients trivial.
GenericProblem sum_problem(std::size_t m) {
  GenericProblem::ValueFn value = [](const BlockVector& x) {
    double s = 0.0;
    for (double v : x.flat()) s += v;
    return s;
  };
  GenericProblem::BlockGradFn grad = [](std::size_t, const BlockVector&,
                                        std::span<double> out) {
    for (auto& v : out) v = 1.0;
  };
  GenericProblem::BlockLipFn lip = [](std::size_t, const BlockVector&) {
    return 1.0;
  };
  std::vector<ScalarRegularizer> regs(
      m, make_scalar_regularizer("zero", RegularizerParams{}));
  return GenericProblem(BlockLayout(std::vector<std::size_t>(m, 1)), value,
                        grad, regs, lip);
}

}  // namespace

TEST_CASE("stationarity surrogate: scalar value by hand") {
  // f = 0.5 x^2, r = |x|, x = 3, gamma = 0.5:
  //   grad = 3, y = 3 - 1.5 = 1.5, w = soft(1.5, 0.5) = 1,
  //   S-hat = ((1 - 3) / 0.5)^2 = 16. Every step is exact in binary.
  auto p = scalar_problem(1.0);
  BlockVector x(p.layout());
  x.store(0, 0, 3.0);
  Workspace ws;
  const double gamma = 0.5;
  const auto s = stationarity_surrogate(p, x, std::span(&gamma, 1), ws);
  CHECK(s.value == 16.0);
  REQUIRE(s.per_block.size() == 1);
  CHECK(s.per_block[0] == 16.0);
  REQUIRE(s.gammas.size() == 1);
  CHECK(s.gammas[0] == 0.5);
}

TEST_CASE("stationarity surrogate reduces to the squared gradient norm") {
  // Zero regularizer: the prox is the identity, so the surrogate equals
  // ||grad f(x)||^2 up to the rounding in forming and undoing the step.
  auto p = sum_problem(4);
  BlockVector x(p.layout());
  for (std::size_t j = 0; j < 4; ++j)
    x.store(j, 0, 0.37 * static_cast<double>(j + 1));
  Workspace ws;
  const std::vector<double> gammas{0.3, 0.7, 1.1, 0.05};
  const auto s = stationarity_surrogate(p, x, gammas, ws);
  // grad is identically 1 in every scalar block.
  CHECK_THAT(s.value, Catch::Matchers::WithinRel(4.0, 1e-12));
}

TEST_CASE("stationarity surrogate vanishes at a fixed point") {
  // x = 0 for f = 0.5 x^2 with an l1 term: gradient zero, prox(0) = 0.
  auto p = scalar_problem(1.0);
  BlockVector x(p.layout());
  Workspace ws;
  const double gamma = 0.8;
  const auto s = stationarity_surrogate(p, x, std::span(&gamma, 1), ws);
  CHECK(s.value == 0.0);
}

TEST_CASE("stationarity surrogate validates its inputs") {
  auto p = scalar_problem(1.0);
  BlockVector x(p.layout());
  Workspace ws;
  const std::vector<double> two{0.5, 0.5};
  CHECK_THROWS_AS(stationarity_surrogate(p, x, two, ws), StructuralError);
  const double zero_gamma = 0.0;
  CHECK_THROWS_AS(stationarity_surrogate(p, x, std::span(&zero_gamma, 1), ws),
                  ParameterError);
}

TEST_CASE("lyapunov value with no history is the objective") {
  auto p = scalar_problem(0.5);
  BlockVector x(p.layout());
  x.store(0, 0, 2.0);
  Workspace ws;
  const std::vector<BlockVector> history{x};
  // f + r = 0.5*4 + 0.5*2 = 3.
  CHECK(lyapunov_value(p, history, 1.0, ws) == 3.0);
  CHECK(lyapunov_value(p, history, 1.0, ws) == objective_value(p, x, ws));
  CHECK_THROWS_AS(lyapunov_value(p, std::span<const BlockVector>{}, 1.0, ws),
                  StructuralError);
}

TEST_CASE("lyapunov value over a constant history is still the objective") {
  auto p = sum_problem(3);
  BlockVector x(p.layout());
  x.store(1, 0, 5.0);
  Workspace ws;
  const std::vector<BlockVector> history{x, x, x, x};
  CHECK(lyapunov_value(p, history, 7.0, ws) == objective_value(p, x, ws));
}

TEST_CASE("lyapunov value matches a hand-computed weighted history") {
  // m = 4 scalar blocks, L = 1, tau = 2. Newest-first history with
  // ||x0 - x1||^2 = 4 (weight 2) and ||x1 - x2||^2 = 1 (weight 1):
  //   Phi = f(x0) + (1 / (2 sqrt(4))) * (2*4 + 1*1) = f(x0) + 2.25.
  auto p = sum_problem(4);
  BlockVector x2(p.layout());
  BlockVector x1 = x2;
  x1.store(0, 0, 1.0);
  BlockVector x0 = x1;
  x0.store(0, 0, 3.0);  // step of 2, squared 4
  Workspace ws;
  const std::vector<BlockVector> history{x0, x1, x2};
  CHECK(objective_value(p, x0, ws) == 3.0);
  CHECK(lyapunov_value(p, history, 1.0, ws) == 3.0 + 2.25);

  // Doubling L doubles only the history term.
  CHECK(lyapunov_value(p, history, 2.0, ws) == 3.0 + 4.5);
}

TEST_CASE("delta ring agrees with the explicit history form") {
  auto p = sum_problem(4);
  BlockVector x2(p.layout());
  BlockVector x1 = x2;
  x1.store(0, 0, 1.0);
  BlockVector x0 = x1;
  x0.store(0, 0, 3.0);
  Workspace ws;
  const std::vector<BlockVector> history{x0, x1, x2};

  DeltaRing ring(2);
  ring.push(squared_distance(x1, x2));  // oldest step first
  ring.push(squared_distance(x0, x1));
  const double obj = objective_value(p, x0, ws);
  CHECK(lyapunov_from_deltas(obj, ring, 1.0, 4) ==
        lyapunov_value(p, history, 1.0, ws));
}

TEST_CASE("delta ring: rollover and the zero-capacity case") {
  DeltaRing ring(2);
  CHECK(ring.weighted_sum() == 0.0);  // pad with zeros before first push
  ring.push(1.0);
  ring.push(2.0);
  ring.push(3.0);  // evicts the 1.0
  // Newest (3.0) carries weight 2, previous (2.0) weight 1.
  CHECK(ring.weighted_sum() == 8.0);

  DeltaRing empty(0);
  empty.push(123.0);  // ignored
  CHECK(empty.tau() == 0);
  CHECK(lyapunov_from_deltas(42.0, empty, 5.0, 3) == 42.0);
}

TEST_CASE("horizon sampler: degenerate horizon always returns zero") {
  HorizonSampler s(0, StepsizeRegime::kSummable, 0.5);
  CHECK(s.probability(0) == 1.0);
  Rng rng = Rng::stream(5, stream_tag::kInit);
  for (int i = 0; i < 100; ++i) CHECK(s.draw(rng) == 0);
  CHECK(sample_pt(0, StepsizeRegime::kSummable, 0.5, rng) == 0);
}

TEST_CASE("horizon sampler: constant weights give the uniform law") {
  const std::uint64_t t = 7;
  HorizonSampler s(t, StepsizeRegime::kSummable, 0.5);
  for (std::uint64_t k = 0; k <= t; ++k)
    CHECK_THAT(s.probability(k),
               Catch::Matchers::WithinRel(1.0 / 8.0, 1e-14));
}

TEST_CASE("horizon sampler: probabilities follow the reciprocal weights") {
  // Smooth regime, c_k = sqrt(k+1): P(k) proportional to 1 / sqrt(k+1).
  const std::uint64_t t = 3;
  HorizonSampler s(t, StepsizeRegime::kSmoothSqrt, 0.5);
  double z = 0.0;
  for (std::uint64_t k = 0; k <= t; ++k) z += 1.0 / std::sqrt(k + 1.0);
  for (std::uint64_t k = 0; k <= t; ++k)
    CHECK_THAT(s.probability(k),
               Catch::Matchers::WithinRel(1.0 / std::sqrt(k + 1.0) / z, 1e-12));
}

TEST_CASE("horizon sampler: probabilities sum to one") {
  HorizonSampler s(25, StepsizeRegime::kAlphaDiminishing, 0.3);
  double total = 0.0;
  for (std::uint64_t k = 0; k <= 25; ++k) total += s.probability(k);
  CHECK_THAT(total, Catch::Matchers::WithinRel(1.0, 1e-12));
}

TEST_CASE("horizon sampler: empirical frequencies match the law") {
  const std::uint64_t t = 3;
  HorizonSampler s(t, StepsizeRegime::kSmoothSqrt, 0.5);
  Rng rng = Rng::stream(17, stream_tag::kInit);
  const int draws = 100000;
  std::vector<int> counts(t + 1, 0);
  for (int i = 0; i < draws; ++i) {
    const auto k = s.draw(rng);
    REQUIRE(k <= t);
    ++counts[k];
  }
  for (std::uint64_t k = 0; k <= t; ++k)
    CHECK_THAT(static_cast<double>(counts[k]) / draws,
               Catch::Matchers::WithinAbs(s.probability(k), 0.01));
}

TEST_CASE("delay statistics summarize a run") {
  auto data = std::make_shared<const FactorizationData>(
      FactorizationData::generate(30, 3));
  const std::size_t d = 2;
  auto p = make_sparse_pca(data, d, 0.5);
  BlockVector x0 = initial_factorization_point(d, 30, 7);

  // Synchronous run: every read is current.
  {
    RunConfig cfg;
    cfg.mode = RunMode::kSync;
    cfg.total_updates = 40;
    cfg.seed = 11;
    cfg.virtual_time = true;
    auto res = run(p, x0, cfg);
    const auto stats = delay_stats(res.trace);
    CHECK(stats.max == 0);
    REQUIRE(!stats.histogram.empty());
    CHECK(stats.histogram[0] == 40);
  }

  // Simulated constant delay 3: the first updates are clamped to the
  // available history (0, 1, 2), everything after sits at exactly 3.
  {
    RunConfig cfg;
    cfg.mode = RunMode::kSimAsync;
    cfg.total_updates = 40;
    cfg.seed = 11;
    cfg.virtual_time = true;
    cfg.policy.tau = 3;
    cfg.delays = DelaySchedule::constant(3);
    auto res = run(p, x0, cfg);
    const auto stats = delay_stats(res.trace);
    CHECK(stats.max == 3);
    REQUIRE(stats.histogram.size() >= 4);
    CHECK(stats.histogram[0] == 1);
    CHECK(stats.histogram[1] == 1);
    CHECK(stats.histogram[2] == 1);
    CHECK(stats.histogram[3] == 37);
    std::uint64_t total = 0;
    for (auto c : stats.histogram) total += c;
    CHECK(total == 40);
  }
}
