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
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "sapalm/factorization.hpp"
#include "sapalm/problem.hpp"
#include "sapalm/verify.hpp"

#include "support/jacobi.hpp"

using namespace sapalm;

namespace {

std::shared_ptr<const FactorizationData> tiny_data(std::size_t n,
                                                   std::uint64_t seed) {
  return std::make_shared<const FactorizationData>(
      FactorizationData::generate(n, seed));
}

std::size_t coord_index(std::size_t d, std::size_t col, std::size_t row) {
  return SparsePcaProblem::coord_index(d, col, row);
}

// Scripted dense re-computation of 0.5||A - X^T Y||_F^2, element by
// element, independent of the library's residual bookkeeping.
double dense_loss(const FactorizationData& data, std::size_t d,
                  const BlockVector& x) {
  const std::size_t n = data.n;
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t)
        dot += x.load(kBlockX, coord_index(d, r, t)) *
               x.load(kBlockY, coord_index(d, c, t));
      const double diff = data.a[r * n + c] - dot;
      acc += diff * diff;
    }
  }
  return 0.5 * acc;
}

}  // namespace

TEST_CASE("generated data is deterministic with normal entries") {
  const auto a = FactorizationData::generate(200, 5);
  const auto b = FactorizationData::generate(200, 5);
  CHECK(a.a == b.a);
  CHECK(FactorizationData::generate(1, 7).a.size() == 1);

  double mean = 0.0, var = 0.0;
  for (double v : a.a) {
    mean += v;
    var += v * v;
  }
  const double count = static_cast<double>(a.a.size());
  mean /= count;
  var = var / count - mean * mean;
  CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 4.0 / std::sqrt(count)));
  CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.05));
}

TEST_CASE("loss at zero factors is half the squared data norm") {
  auto data = tiny_data(6, 11);
  auto p = make_sparse_pca(data, 2, 1.0);
  BlockVector x(p.layout());  // zeros
  Workspace ws;
  double half_norm = 0.0;
  for (double v : data->a) half_norm += v * v;
  half_norm *= 0.5;
  CHECK_THAT(p.smooth_value(x, ws), Catch::Matchers::WithinULP(half_norm, 4));
  // All penalty terms vanish at zero, so the full objective agrees too.
  CHECK(objective_value(p, x, ws) == p.smooth_value(x, ws));
}

TEST_CASE("exact factorization zeroes the loss") {
  // d = n, X = I, Y = A: residual vanishes.
  const std::size_t n = 4;
  auto data = tiny_data(n, 13);
  auto p = make_sparse_pca(data, n, 0.0);
  BlockVector x(p.layout());
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t row = 0; row < n; ++row) {
      x.store(kBlockX, coord_index(n, col, row), col == row ? 1.0 : 0.0);
      x.store(kBlockY, coord_index(n, col, row), data->a[row * n + col]);
    }
  }
  Workspace ws;
  CHECK_THAT(p.smooth_value(x, ws), Catch::Matchers::WithinAbs(0.0, 1e-18));
}

TEST_CASE("loss matches a scripted dense evaluation") {
  auto data = tiny_data(5, 17);
  const std::size_t d = 2;
  auto p = make_sparse_pca(data, d, 0.3);
  BlockVector x = initial_factorization_point(d, 5, 23);
  Workspace ws;
  CHECK_THAT(p.smooth_value(x, ws),
             Catch::Matchers::WithinRel(dense_loss(*data, d, x), 1e-12));
  double l1 = 0.0;
  for (double v : x.flat()) l1 += std::fabs(v);
  CHECK_THAT(objective_value(p, x, ws),
             Catch::Matchers::WithinRel(dense_loss(*data, d, x) + 0.3 * l1,
                                        1e-12));
}

TEST_CASE("firm objective matches a scripted evaluation") {
  auto data = tiny_data(5, 19);
  const std::size_t d = 2;
  const double lambda = 0.4, kappa = 2.0, mu = 0.1;
  auto p = make_firm_pca(data, d, lambda, kappa, mu);
  BlockVector x = initial_factorization_point(d, 5, 29);
  Workspace ws;
  double reg = 0.0;
  for (double v : x.flat())
    reg += firm_penalty_scalar(v, lambda, kappa) + 0.5 * mu * v * v;
  CHECK_THAT(objective_value(p, x, ws),
             Catch::Matchers::WithinRel(dense_loss(*data, d, x) + reg, 1e-12));
  CHECK_THROWS_AS(make_firm_pca(data, d, 2.0, 1.0, 0.0), ParameterError);
}

TEST_CASE("gradients vanish where they must") {
  auto data = tiny_data(6, 31);
  auto p = make_sparse_pca(data, 2, 0.5);
  Workspace ws;
  BlockVector x(p.layout());
  std::vector<double> g(p.layout().block_size(0));

  // Both factors zero: both gradients zero.
  p.block_gradient(kBlockX, x, g, ws);
  for (double v : g) CHECK(v == 0.0);
  p.block_gradient(kBlockY, x, g, ws);
  for (double v : g) CHECK(v == 0.0);

  // Y = 0, X arbitrary: the X gradient is still zero.
  Rng rng = Rng::stream(31, stream_tag::kInit);
  for (std::size_t i = 0; i < x.block_size(kBlockX); ++i)
    x.store(kBlockX, i, rng.normal());
  p.block_gradient(kBlockX, x, g, ws);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("gradients agree with finite differences") {
  verify::GradientFdOptions opt;
  opt.points = 6;
  opt.n = 10;
  const auto res = verify::check_gradient_finite_diff(opt);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("coordinate gradient matches the block gradient") {
  auto data = tiny_data(7, 37);
  const std::size_t d = 3;
  auto p = make_sparse_pca(data, d, 0.5);
  BlockVector x = initial_factorization_point(d, 7, 41);
  Workspace ws, ws2;
  std::vector<double> g(p.layout().block_size(0));
  for (std::size_t j = 0; j < 2; ++j) {
    p.block_gradient(j, x, g, ws);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK_THAT(p.coord_gradient(j, i, x, ws2),
                 Catch::Matchers::WithinRel(g[i], 1e-12));
  }
}

TEST_CASE("cached column kernel reproduces the coordinate gradient") {
  auto data = tiny_data(7, 43);
  const std::size_t d = 3;
  auto p = make_sparse_pca(data, d, 0.5);
  BlockVector x = initial_factorization_point(d, 7, 47);
  Workspace ws, ws2;
  auto kernel = p.make_coord_kernel(x, ws);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t col = 0; col < 7; ++col) {
      kernel.begin_column(j, col);
      for (std::size_t row = 0; row < d; ++row) {
        const std::size_t flat = coord_index(d, col, row);
        CHECK(kernel.gradient(j, col, row) ==
              Catch::Approx(p.coord_gradient(j, flat, x, ws2)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("lipschitz constants: floor, rank-1 value, eigensolver oracle") {
  auto data = tiny_data(10, 53);
  const std::size_t d = 3;
  Workspace ws;

  // Y = 0 collapses the Gram matrix; the floor keeps the constant positive.
  {
    auto p = make_sparse_pca(data, d, 0.5);
    BlockVector x(p.layout());
    CHECK(p.block_lipschitz(kBlockX, x, ws) == 1e-8);
  }

  // Y with one nonzero column of norm 2: ||YY^T||_2 = 4, times rho.
  {
    const double rho = 1.1;
    auto p = make_sparse_pca(data, d, 0.5, rho);
    BlockVector x(p.layout());
    x.store(kBlockY, coord_index(d, 0, 0), 2.0);
    CHECK_THAT(p.block_lipschitz(kBlockX, x, ws),
               Catch::Matchers::WithinRel(4.0 * rho, 1e-9));
  }

  // Random Y: power iteration against the dense Jacobi oracle, rho = 1.
  {
    auto p = make_sparse_pca(data, d, 0.5, 1.0);
    BlockVector x = initial_factorization_point(d, 10, 59);
    std::vector<double> gram(d * d, 0.0);
    for (std::size_t col = 0; col < 10; ++col)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
          gram[a * d + b] += x.load(kBlockY, coord_index(d, col, a)) *
                             x.load(kBlockY, coord_index(d, col, b));
    const double oracle = testsupport::jacobi_spectral_norm(gram, d);
    CHECK_THAT(p.block_lipschitz(kBlockX, x, ws),
               Catch::Matchers::WithinRel(oracle, 1e-6));
  }
}

TEST_CASE("lipschitz constant actually bounds gradient differences") {
  // 100 random pairs (X, X') with Y fixed, rho = 1: the claimed constant
  // must dominate the measured ratio up to rounding slack.
  auto data = tiny_data(8, 61);
  const std::size_t d = 2;
  auto p = make_sparse_pca(data, d, 0.5, 1.0);
  Workspace ws;
  Rng rng = Rng::stream(61, stream_tag::kInit);
  const std::size_t bs = p.layout().block_size(kBlockX);
  std::vector<double> g1(bs), g2(bs);
  BlockVector x = initial_factorization_point(d, 8, 67);
  const double lx = p.block_lipschitz(kBlockX, x, ws);
  for (int trial = 0; trial < 100; ++trial) {
    BlockVector x1 = x, x2 = x;
    for (std::size_t i = 0; i < bs; ++i) {
      x1.store(kBlockX, i, rng.normal());
      x2.store(kBlockX, i, rng.normal());
    }
    p.block_gradient(kBlockX, x1, g1, ws);
    p.block_gradient(kBlockX, x2, g2, ws);
    double dg = 0.0, dx = 0.0;
    for (std::size_t i = 0; i < bs; ++i) {
      dg += (g1[i] - g2[i]) * (g1[i] - g2[i]);
      dx += (x1.load(kBlockX, i) - x2.load(kBlockX, i)) *
            (x1.load(kBlockX, i) - x2.load(kBlockX, i));
    }
    CHECK(std::sqrt(dg) <= lx * std::sqrt(dx) * (1.0 + 1e-9));
  }
}

TEST_CASE("full-batch minibatch gradient is the exact gradient") {
  auto data = tiny_data(9, 71);
  const std::size_t d = 2;
  auto p = make_sparse_pca(data, d, 0.5);
  BlockVector x = initial_factorization_point(d, 9, 73);
  Workspace ws;
  const std::size_t bs = p.layout().block_size(0);
  std::vector<double> full(bs), est(bs);
  std::vector<std::size_t> all(p.minibatch_space(0));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (std::size_t j = 0; j < 2; ++j) {
    p.block_gradient(j, x, full, ws);
    p.minibatch_block_gradient(j, x, all, est, ws);
    for (std::size_t i = 0; i < bs; ++i) CHECK(est[i] == full[i]);
  }
  CHECK_THROWS_AS(
      p.minibatch_block_gradient(0, x, std::span<const std::size_t>{}, est, ws),
      ParameterError);
}

TEST_CASE("singleton minibatches average to the exact gradient") {
  verify::MinibatchOptions opt;
  opt.n = 30;
  opt.draws = 0;  // statistics part not exercised here
  const auto stats = verify::minibatch_statistics(opt);
  CHECK(stats.singleton_avg_err < 1e-10);
}

TEST_CASE("minibatch estimator variance scales as one over batch size") {
  verify::MinibatchOptions opt;
  opt.draws = 1500;
  const auto stats = verify::minibatch_statistics(opt);
  CHECK(stats.variance_factor > opt.lo);
  CHECK(stats.variance_factor < opt.hi);
}

TEST_CASE("minibatch estimator is statistically unbiased") {
  // Mean over many random batches of size 8 close to the exact gradient,
  // entry by entry, within 4 standard errors.
  auto data = tiny_data(12, 79);
  const std::size_t d = 2;
  auto p = make_sparse_pca(data, d, 0.5);
  BlockVector x = initial_factorization_point(d, 12, 83);
  Workspace ws;
  Rng rng = Rng::stream(79, stream_tag::kData);
  const std::size_t bs = p.layout().block_size(0);
  std::vector<double> full(bs), est(bs), mean(bs, 0.0), m2(bs, 0.0);
  p.block_gradient(0, x, full, ws);
  const int draws = 10000;
  std::vector<std::size_t> batch(8);
  for (int t = 0; t < draws; ++t) {
    for (auto& idx : batch) idx = rng.bounded(12);
    p.minibatch_block_gradient(0, x, batch, est, ws);
    for (std::size_t i = 0; i < bs; ++i) {
      mean[i] += est[i];
      m2[i] += est[i] * est[i];
    }
  }
  for (std::size_t i = 0; i < bs; ++i) {
    mean[i] /= draws;
    const double var = m2[i] / draws - mean[i] * mean[i];
    const double se = std::sqrt(var / draws);
    CHECK(std::fabs(mean[i] - full[i]) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("data files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "sapalm_data_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "data.bin").string();
  const auto a = FactorizationData::generate(15, 89);
  a.save(path);
  const auto b = FactorizationData::load(path);
  CHECK(a.n == b.n);
  CHECK(a.a == b.a);

  // Corrupt magic.
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(FactorizationData::load(path), IoError);
  CHECK_THROWS_AS(FactorizationData::load((dir / "missing.bin").string()),
                  IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("callback problem adapter evaluates quadratics") {
  // f = 0.5||x||^2 split into two blocks, l1 on each: gradient is x itself.
  GenericProblem::ValueFn value = [](const BlockVector& x) {
    double s = 0.0;
    for (double v : x.flat()) s += v * v;
    return 0.5 * s;
  };
  GenericProblem::BlockGradFn grad = [](std::size_t j, const BlockVector& x,
                                        std::span<double> out) {
    auto b = x.block(j);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = b[i];
  };
  GenericProblem::BlockLipFn lip = [](std::size_t, const BlockVector&) {
    return 1.0;
  };
  RegularizerParams params;
  params.lambda = 1.0;
  std::vector<ScalarRegularizer> regs(2, make_scalar_regularizer("l1", params));
  GenericProblem p(BlockLayout({2, 3}), value, grad, regs, lip);

  BlockVector x(p.layout());
  x.store(0, 0, 3.0);
  Workspace ws;
  CHECK(p.smooth_value(x, ws) == 4.5);
  CHECK(objective_value(p, x, ws) == 4.5 + 3.0);
  CHECK(p.coord_gradient(0, 0, x, ws) == 3.0);
  // The adapter layers the multiplicative safety factor on the callback.
  CHECK(p.block_lipschitz(0, x, ws) == 1.1);
}
