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
//
// Self-contained correctness checks built on independent oracles: scalar
// prox formulas against grid search, analytic gradients against central
// finite differences, engine cross-replay, descent and rate statistics,
// noise and estimator moments, and the horizon sampler's distribution.
// The CLI exposes these as the `verify` subcommand; the test suite drives
// the same functions with pinned parameters.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/diagnostics.hpp"
#include "sapalm/engine.hpp"
#include "sapalm/error.hpp"
#include "sapalm/factorization.hpp"
#include "sapalm/problem.hpp"
#include "sapalm/prox.hpp"
#include "sapalm/rng.hpp"
#include "sapalm/schedules.hpp"

namespace sapalm::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // quantity compared against the threshold
  double threshold = 0.0;
  std::string detail;
};

inline std::string format_check(const CheckResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "[%s] %-22s measured=%.6g threshold=%.6g %s",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.measured,
                r.threshold, r.detail.c_str());
  return buf;
}

// ---------------------------------------------------------------------------
// Scalar prox oracle: brute-force grid search
// ---------------------------------------------------------------------------

// Value of the prox objective r(x) + (x - y)^2 / (2 gamma) at x.
inline double prox_point_objective(const ScalarRegularizer& r, double x,
                                   double y, double gamma) {
  const double diff = x - y;
  return r.value(x) + diff * diff / (2.0 * gamma);
}

struct GridMin {
  double x = 0.0;
  double value = 0.0;
};

// Coarse scan of [lo, hi], then one refinement pass around the best coarse
// point. Knows nothing about the closed forms it validates.
inline GridMin grid_search_prox(const ScalarRegularizer& r, double y,
                                double gamma, double lo = -10.0,
                                double hi = 10.0, double coarse = 1e-4,
                                double fine = 1e-6) {
  GridMin best{lo, prox_point_objective(r, lo, y, gamma)};
  const auto scan = [&](double a, double b, double step) {
    const std::size_t steps = static_cast<std::size_t>((b - a) / step) + 1;
    for (std::size_t i = 0; i <= steps; ++i) {
      const double x = a + static_cast<double>(i) * step;
      if (x > b + step * 0.5) break;
      const double v = prox_point_objective(r, x, y, gamma);
      if (v < best.value) best = {x, v};
    }
  };
  scan(lo, hi, coarse);
  scan(std::max(lo, best.x - coarse), std::min(hi, best.x + coarse), fine);
  return best;
}

struct ProxOracleOptions {
  std::uint64_t seed = 1;
  int cases_per_op = 100;
  double tol = 1e-8;
};

// Four scalar regularizers, random (y, gamma, params) per case. Measures
// the worst signed objective gap: prox objective at the closed-form point
// minus the grid minimum. A correct closed form is never worse than the
// grid, so the gap stays at rounding level.
inline CheckResult check_prox_against_grid(const ProxOracleOptions& opt = {}) {
  Rng rng = Rng::stream(opt.seed, stream_tag::kDiagnostics);
  CheckResult res{"prox-oracle", false, 0.0, opt.tol, ""};
  double worst = -1e300;
  std::string worst_case;

  const char* ops[] = {"l1", "firm", "firm+quadratic", "zero"};
  for (const char* op : ops) {
    for (int c = 0; c < opt.cases_per_op; ++c) {
      RegularizerParams params;
      const double gamma = 0.1 + 1.9 * rng.uniform();
      const double y = -8.0 + 16.0 * rng.uniform();
      std::string name = op;
      if (name == "l1") {
        params.lambda = 2.0 * rng.uniform();
      } else if (name == "firm" || name == "firm+quadratic") {
        params.lambda = 0.05 + 1.45 * rng.uniform();
        params.kappa = gamma * params.lambda + 0.05 + 3.0 * rng.uniform();
        if (name == "firm+quadratic") {
          params.mu = 0.01 + 0.99 * rng.uniform();
          name = "firm";
        }
      }
      auto reg = make_scalar_regularizer(name, params);
      const double x_closed = reg.prox(y, gamma);
      const double f_closed = prox_point_objective(reg, x_closed, y, gamma);
      const GridMin grid = grid_search_prox(reg, y, gamma);
      const double gap = f_closed - grid.value;
      if (gap > worst) {
        worst = gap;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%s y=%.4f gamma=%.4f lambda=%.4f kappa=%.4f mu=%.4f",
                      reg.name.c_str(), y, gamma, params.lambda, params.kappa,
                      params.mu);
        worst_case = buf;
      }
    }
  }
  res.measured = worst;
  res.pass = worst < opt.tol;
  res.detail = "worst gap at " + worst_case;
  return res;
}

// ---------------------------------------------------------------------------
// Gradient check: central finite differences on the smooth loss
// ---------------------------------------------------------------------------

struct GradientFdOptions {
  std::uint64_t seed = 2;
  int points = 20;
  std::size_t n = 20;
  std::size_t d = 3;
  double h = 1e-6;
  double tol = 1e-5;
};

namespace detail {

template <class P>
double max_fd_error(const P& p, Rng& rng, int points, double h) {
  Workspace ws;
  const auto& layout = p.layout();
  BlockVector x(layout);
  std::vector<double> grad;
  double worst = 0.0;
  for (int pt = 0; pt < points; ++pt) {
    for (double& v : x.flat()) v = rng.normal(0.0, 1.0);
    for (std::size_t j = 0; j < layout.block_count(); ++j) {
      const std::size_t nj = layout.block_size(j);
      grad.resize(nj);
      p.block_gradient(j, x, {grad.data(), nj}, ws);
      for (std::size_t i = 0; i < nj; ++i) {
        const double keep = x.load(j, i);
        x.store(j, i, keep + h);
        const double fp = p.smooth_value(x, ws);
        x.store(j, i, keep - h);
        const double fm = p.smooth_value(x, ws);
        x.store(j, i, keep);
        const double fd = (fp - fm) / (2.0 * h);
        const double rel =
            std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i]));
        if (rel > worst) worst = rel;
      }
    }
  }
  return worst;
}

}  // namespace detail

// Analytic block gradients of both factorization losses against central
// differences of the smooth value, every coordinate at random points.
inline CheckResult check_gradient_finite_diff(
    const GradientFdOptions& opt = {}) {
  Rng rng = Rng::stream(opt.seed, stream_tag::kDiagnostics);
  auto data = std::make_shared<const FactorizationData>(
      FactorizationData::generate(opt.n, opt.seed));
  auto spca = make_sparse_pca(data, opt.d, 0.5);
  auto firm = make_firm_pca(data, opt.d, 0.5, 2.5, 0.1);

  const double e1 = detail::max_fd_error(spca, rng, opt.points, opt.h);
  const double e2 = detail::max_fd_error(firm, rng, opt.points, opt.h);
  CheckResult res{"gradient-fd", false, std::max(e1, e2), opt.tol, ""};
  char buf[96];
  std::snprintf(buf, sizeof(buf), "l1 loss %.3g, firm loss %.3g", e1, e2);
  res.detail = buf;
  res.pass = res.measured < opt.tol;
  return res;
}

// ---------------------------------------------------------------------------
// Engine cross-replay: identical iterate sequences
// ---------------------------------------------------------------------------

struct EquivalenceOptions {
  std::uint64_t base_seed = 3;
  int seeds = 3;
  std::size_t n = 100;
  std::size_t d = 3;
  std::uint64_t epochs = 50;
  double lambda = 0.5;
};

// Runs sync, zero-delay sim-async and one-worker async on the same seed
// and compares every k-indexed iterate for bitwise equality.
inline CheckResult check_engine_equivalence(const EquivalenceOptions& opt = {}) {
  CheckResult res{"engine-equivalence", true, 0.0, 0.0, ""};
  std::uint64_t mismatches = 0;
  std::uint64_t compared = 0;

  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
    auto data = std::make_shared<const FactorizationData>(
        FactorizationData::generate(opt.n, seed));
    auto prob = make_sparse_pca(data, opt.d, opt.lambda);
    BlockVector x0 = initial_factorization_point(opt.d, opt.n, seed);

    RunConfig base;
    base.total_updates = opt.epochs * prob.layout().block_count();
    base.seed = seed;
    base.policy.regime = StepsizeRegime::kSummable;
    base.policy.a = 2.0;
    base.checkpoint_objective = false;
    base.checkpoint_stationarity = false;

    std::vector<std::vector<double>> seqs[3];
    const RunMode modes[3] = {RunMode::kSync, RunMode::kSimAsync,
                              RunMode::kAsync};
    for (int e = 0; e < 3; ++e) {
      RunConfig cfg = base;
      cfg.mode = modes[e];
      auto& seq = seqs[e];
      seq.reserve(base.total_updates);
      cfg.on_update = [&seq](std::uint64_t, const BlockVector& x) {
        seq.emplace_back(x.flat().begin(), x.flat().end());
      };
      auto r = run(prob, x0, cfg);
      if (r.trace.summary.aborted) {
        res.pass = false;
        res.detail = std::string("run aborted: ") +
                     r.trace.summary.abort_reason;
        return res;
      }
    }
    for (std::size_t k = 0; k < seqs[0].size(); ++k) {
      ++compared;
      const bool same = seqs[0][k] == seqs[1][k] && seqs[0][k] == seqs[2][k];
      if (!same) {
        ++mismatches;
        if (res.detail.empty())
          res.detail = "first divergence at seed " + std::to_string(seed) +
                       ", k=" + std::to_string(k + 1);
      }
    }
    if (seqs[0].size() != seqs[1].size() || seqs[0].size() != seqs[2].size()) {
      ++mismatches;
      res.detail = "sequence length mismatch at seed " + std::to_string(seed);
    }
  }
  res.measured = static_cast<double>(mismatches);
  res.pass = mismatches == 0;
  if (res.detail.empty())
    res.detail = std::to_string(compared) + " iterates bitwise-equal";
  return res;
}

// ---------------------------------------------------------------------------
// Descent statistics of the composite potential
// ---------------------------------------------------------------------------

struct LyapunovOptions {
  std::uint64_t base_seed = 4;
  int seeds = 50;
  std::size_t n = 100;
  std::size_t d = 3;
  unsigned tau = 5;
  std::uint64_t epochs_checked = 20;
  double lambda = 0.5;
};

// Noise-free delayed replay: across seeds, the per-step change of the
// delay-weighted potential must not be positive in the mean by more than
// two standard errors, at every step of the checked range.
inline CheckResult check_lyapunov_decrease(const LyapunovOptions& opt = {}) {
  CheckResult res{"lyapunov-descent", false, 0.0, 0.0, ""};
  std::vector<std::vector<double>> phi;
  phi.reserve(opt.seeds);

  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.base_seed + static_cast<std::uint64_t>(s);
    auto data = std::make_shared<const FactorizationData>(
        FactorizationData::generate(opt.n, seed));
    auto prob = make_sparse_pca(data, opt.d, opt.lambda);
    BlockVector x0 = initial_factorization_point(opt.d, opt.n, seed);

    RunConfig cfg;
    cfg.mode = RunMode::kSimAsync;
    const std::uint64_t m = prob.layout().block_count();
    cfg.total_updates = (opt.epochs_checked + 2) * m;
    cfg.checkpoint_stride = 1;
    cfg.seed = seed;
    cfg.policy.regime = StepsizeRegime::kSummable;
    cfg.policy.a = 2.0;
    cfg.policy.tau = opt.tau;
    cfg.delays = DelaySchedule::iid_uniform(
        opt.tau, hash_mix(seed, stream_tag::kDelay));
    cfg.virtual_time = true;

    auto r = run_sim_async(prob, x0, cfg);
    if (r.trace.summary.aborted) {
      res.detail = "run aborted: " + r.trace.summary.abort_reason;
      return res;
    }
    std::vector<double> series;
    series.reserve(r.trace.checkpoints.size());
    for (const auto& cp : r.trace.checkpoints)
      series.push_back(cp.lyapunov);
    phi.push_back(std::move(series));
  }

  const std::uint64_t m = 2;
  const std::uint64_t ks = opt.epochs_checked * m;
  double worst_z = -1e300;
  std::uint64_t worst_k = 0;
  for (std::uint64_t k = 0; k < ks; ++k) {
    double mean = 0.0;
    for (const auto& series : phi) mean += series[k + 1] - series[k];
    mean /= static_cast<double>(phi.size());
    double var = 0.0;
    for (const auto& series : phi) {
      const double diff = series[k + 1] - series[k] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(phi.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(phi.size()));
    // Deterministic steps have zero spread; then the mean itself must not
    // be positive.
    const double z = se > 0 ? mean / se : (mean <= 0 ? -1e300 : 1e300);
    if (z > worst_z) {
      worst_z = z;
      worst_k = k;
    }
  }
  res.measured = worst_z;
  res.threshold = 2.0;
  res.pass = worst_z <= 2.0;
  res.detail = "worst mean-change z-score at k=" + std::to_string(worst_k);
  return res;
}

// ---------------------------------------------------------------------------
// Decay rate of the running-minimum stationarity envelope
// ---------------------------------------------------------------------------

struct RateOptions {
  std::uint64_t seed = 5;
  std::size_t n = 500;
  std::size_t d = 5;
  unsigned tau = 3;
  std::uint64_t epochs = 200;
  double lambda = 0.5;
  double max_slope = -0.8;
};

// Noise-free delayed run with constant weights: fit log(min-envelope of
// the stationarity measure) against log(k) over the second half.
inline CheckResult check_envelope_rate(const RateOptions& opt = {}) {
  CheckResult res{"rate-slope", false, 0.0, opt.max_slope, ""};
  auto data = std::make_shared<const FactorizationData>(
      FactorizationData::generate(opt.n, opt.seed));
  auto prob = make_sparse_pca(data, opt.d, opt.lambda);
  BlockVector x0 = initial_factorization_point(opt.d, opt.n, opt.seed);

  RunConfig cfg;
  cfg.mode = RunMode::kSimAsync;
  const std::uint64_t m = prob.layout().block_count();
  cfg.total_updates = opt.epochs * m;
  cfg.checkpoint_stride = 1;
  cfg.seed = opt.seed;
  cfg.policy.regime = StepsizeRegime::kSummable;
  cfg.policy.a = 2.0;
  cfg.policy.tau = opt.tau;
  cfg.delays =
      DelaySchedule::iid_uniform(opt.tau, hash_mix(opt.seed, stream_tag::kDelay));
  cfg.checkpoint_objective = false;
  cfg.virtual_time = true;

  auto r = run_sim_async(prob, x0, cfg);
  if (r.trace.summary.aborted) {
    res.detail = "run aborted: " + r.trace.summary.abort_reason;
    return res;
  }

  // Running minimum of the stationarity column, indexed by k >= 1.
  std::vector<double> env;
  env.reserve(r.trace.checkpoints.size());
  double cur = 1e300;
  for (const auto& cp : r.trace.checkpoints) {
    if (cp.k == 0) continue;
    cur = std::min(cur, cp.stationarity);
    env.push_back(cur);
  }
  const std::size_t total = env.size();
  const std::size_t from = total / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = from; i < total; ++i) {
    if (!(env[i] > 0)) continue;  // exact zero cannot be log-fitted
    const double lx = std::log(static_cast<double>(i + 1));
    const double ly = std::log(env[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  if (cnt < 8) {
    res.detail = "envelope hit zero too early for a fit";
    return res;
  }
  const double denom = static_cast<double>(cnt) * sxx - sx * sx;
  const double slope = (static_cast<double>(cnt) * sxy - sx * sy) / denom;
  res.measured = slope;
  res.pass = slope <= opt.max_slope;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "fit over k in [%zu, %zu]", from + 1, total);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// Noise generator moments
// ---------------------------------------------------------------------------

struct NoiseStatsOptions {
  std::uint64_t seed = 6;
  int draws = 20000;
  std::size_t block = 25;
  double tol = 0.1;  // relative deviation of E||nu||^2 from the schedule
};

// Monte Carlo over the gaussian schedules: empirical total variance of a
// sampled block must match the schedule's sigma_k^2 and the mean must be
// zero within sampling error.
inline CheckResult check_noise_statistics(const NoiseStatsOptions& opt = {}) {
  CheckResult res{"noise-stats", false, 0.0, opt.tol, ""};
  Rng rng = Rng::stream(opt.seed, stream_tag::kDiagnostics);
  std::vector<double> buf(opt.block);
  double worst = 0.0;
  std::string worst_at;

  const NoiseKind kinds[] = {NoiseKind::kGaussianSummable,
                             NoiseKind::kGaussianDiminishing,
                             NoiseKind::kGaussianConstant};
  const std::uint64_t ks[] = {0, 3, 10};
  for (NoiseKind kind : kinds) {
    NoiseModel model;
    model.kind = kind;
    model.sigma0 = 0.7;
    model.alpha = 0.5;
    for (std::uint64_t k : ks) {
      const double want = noise_total_variance(model, k);
      double acc = 0.0;
      double mean = 0.0;
      for (int t = 0; t < opt.draws; ++t) {
        sample_block_noise(model, k, opt.block, {buf.data(), buf.size()}, rng);
        for (double v : buf) {
          acc += v * v;
          mean += v;
        }
      }
      acc /= static_cast<double>(opt.draws);
      mean /= static_cast<double>(opt.draws) * opt.block;
      const double rel = std::abs(acc - want) / want;
      if (rel > worst) {
        worst = rel;
        worst_at = std::string(to_string(kind)) + " k=" + std::to_string(k);
      }
      const double mean_se =
          std::sqrt(want / opt.block) /
          std::sqrt(static_cast<double>(opt.draws) * opt.block);
      if (std::abs(mean) > 6.0 * mean_se) {
        res.detail = "nonzero mean for " + worst_at;
        res.measured = std::abs(mean);
        return res;
      }
    }
  }
  res.measured = worst;
  res.pass = worst < opt.tol;
  res.detail = "worst variance deviation at " + worst_at;
  return res;
}

// ---------------------------------------------------------------------------
// Minibatch estimator: unbiasedness and variance scaling
// ---------------------------------------------------------------------------

struct MinibatchOptions {
  std::uint64_t seed = 7;
  std::size_t n = 50;
  std::size_t d = 3;
  int draws = 5000;
  double avg_tol = 1e-10;
  double lo = 0.7;
  double hi = 1.4;
};

struct MinibatchStats {
  double singleton_avg_err = 0.0;  // max abs gap: singleton average vs full
  double variance_factor = 0.0;    // Var(batch 64) / (Var(batch 8) / 8)
};

inline MinibatchStats minibatch_statistics(const MinibatchOptions& opt) {
  auto data = std::make_shared<const FactorizationData>(
      FactorizationData::generate(opt.n, opt.seed));
  auto prob = make_sparse_pca(data, opt.d, 0.5);
  BlockVector x = initial_factorization_point(opt.d, opt.n, opt.seed);
  Workspace ws;
  MinibatchStats stats;

  const std::size_t nj = prob.layout().block_size(0);
  std::vector<double> full(nj), est(nj), acc(nj);
  std::vector<std::size_t> batch_buf;

  for (std::size_t j = 0; j < 2; ++j) {
    prob.block_gradient(j, x, {full.data(), nj}, ws);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < opt.n; ++i) {
      const std::size_t idx[1] = {i};
      prob.minibatch_block_gradient(j, x, {idx, 1}, {est.data(), nj}, ws);
      for (std::size_t c = 0; c < nj; ++c) acc[c] += est[c];
    }
    for (std::size_t c = 0; c < nj; ++c) {
      const double err = std::abs(acc[c] / static_cast<double>(opt.n) -
                                  full[c]);
      stats.singleton_avg_err = std::max(stats.singleton_avg_err, err);
    }
  }

  // Per-entry variance around the full gradient, averaged over entries,
  // for batch sizes 8 and 64 on block 0.
  Rng rng = Rng::stream(opt.seed, stream_tag::kDiagnostics);
  prob.block_gradient(0, x, {full.data(), nj}, ws);
  const std::size_t sizes[2] = {8, 64};
  double var[2] = {0.0, 0.0};
  for (int which = 0; which < 2; ++which) {
    double acc_var = 0.0;
    for (int t = 0; t < opt.draws; ++t) {
      auto batch =
          sapalm::detail::sample_batch(rng, opt.n, sizes[which], batch_buf);
      prob.minibatch_block_gradient(0, x, batch, {est.data(), nj}, ws);
      for (std::size_t c = 0; c < nj; ++c) {
        const double diff = est[c] - full[c];
        acc_var += diff * diff;
      }
    }
    var[which] = acc_var / (static_cast<double>(opt.draws) *
                            static_cast<double>(nj));
  }
  stats.variance_factor = var[1] / (var[0] / 8.0);
  return stats;
}

inline CheckResult check_minibatch_estimator(const MinibatchOptions& opt = {}) {
  const MinibatchStats stats = minibatch_statistics(opt);
  CheckResult res{"minibatch", false, 0.0, 0.0, ""};
  const bool unbiased = stats.singleton_avg_err < opt.avg_tol;
  const bool scaled =
      stats.variance_factor >= opt.lo && stats.variance_factor <= opt.hi;
  res.pass = unbiased && scaled;
  res.measured = stats.variance_factor;
  res.threshold = opt.hi;
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "singleton avg err %.3g (tol %.1g), variance factor %.4f in "
                "[%.1f, %.1f]",
                stats.singleton_avg_err, opt.avg_tol, stats.variance_factor,
                opt.lo, opt.hi);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// Horizon sampler distribution
// ---------------------------------------------------------------------------

struct HorizonOptions {
  std::uint64_t seed = 8;
  std::uint64_t horizon = 50;
  int draws = 100000;
  double tol = 0.01;
};

inline CheckResult check_horizon_sampler(const HorizonOptions& opt = {}) {
  CheckResult res{"horizon-sampler", false, 0.0, opt.tol, ""};
  double worst = 0.0;
  std::string worst_at;
  const struct {
    StepsizeRegime regime;
    double alpha;
  } cases[] = {{StepsizeRegime::kSummable, 0.5},
               {StepsizeRegime::kAlphaDiminishing, 0.5}};
  for (const auto& cse : cases) {
    Rng rng = Rng::stream(opt.seed, stream_tag::kDiagnostics);
    HorizonSampler sampler(opt.horizon, cse.regime, cse.alpha);
    std::vector<std::uint64_t> counts(opt.horizon + 1, 0);
    for (int t = 0; t < opt.draws; ++t) counts[sampler.draw(rng)]++;
    double tv = 0.0;
    for (std::uint64_t k = 0; k <= opt.horizon; ++k) {
      const double emp =
          static_cast<double>(counts[k]) / static_cast<double>(opt.draws);
      tv += std::abs(emp - sampler.probability(k));
    }
    tv *= 0.5;
    if (tv > worst) {
      worst = tv;
      worst_at = to_string(cse.regime);
    }
  }
  res.measured = worst;
  res.pass = worst < opt.tol;
  res.detail = "worst total variation under " + worst_at + " weights";
  return res;
}

// ---------------------------------------------------------------------------
// Run-behavior checks: descent, noise robustness, stale-read stress
// ---------------------------------------------------------------------------

namespace detail {

struct TracedRun {
  double initial_objective = 0.0;
  std::vector<double> objective;     // indexed by k, k = 0..total
  std::vector<double> stationarity;  // indexed by k, k = 1..total
  bool aborted = false;
  std::string abort_reason;
};

// Shared driver for the descent and robustness checks: a single-threaded
// run with a checkpoint at every update.
inline TracedRun traced_factorization_run(std::size_t n, std::size_t d,
                                          double lambda, std::uint64_t epochs,
                                          std::uint64_t seed, RunMode mode,
                                          const StepsizePolicy& policy,
                                          const NoiseModel& noise,
                                          const DelaySchedule& delays) {
  auto data = std::make_shared<const FactorizationData>(
      FactorizationData::generate(n, seed));
  auto prob = make_sparse_pca(data, d, lambda);
  BlockVector x0 = initial_factorization_point(d, n, seed);

  RunConfig cfg;
  cfg.mode = mode;
  cfg.total_updates = epochs * prob.layout().block_count();
  cfg.checkpoint_stride = 1;
  cfg.seed = seed;
  cfg.policy = policy;
  cfg.noise = noise;
  cfg.delays = delays;
  cfg.virtual_time = true;

  auto r = run(prob, x0, cfg);
  TracedRun out;
  out.aborted = r.trace.summary.aborted;
  out.abort_reason = r.trace.summary.abort_reason;
  for (const auto& cp : r.trace.checkpoints) {
    out.objective.push_back(cp.objective);
    if (cp.k > 0) out.stationarity.push_back(cp.stationarity);
  }
  if (!out.objective.empty()) out.initial_objective = out.objective.front();
  return out;
}

}  // namespace detail

struct SyncDescentOptions {
  std::uint64_t seed = 9;
  std::size_t n = 200;
  std::size_t d = 5;
  double lambda = 0.5;
  std::uint64_t epochs = 50;
};

// Noise-free synchronous runs must never increase the objective, at any
// update, with no floating-point slack.
inline CheckResult check_sync_descent(const SyncDescentOptions& opt = {}) {
  StepsizePolicy policy;
  policy.regime = StepsizeRegime::kSummable;
  policy.a = 2.0;
  auto tr = detail::traced_factorization_run(
      opt.n, opt.d, opt.lambda, opt.epochs, opt.seed, RunMode::kSync, policy,
      NoiseModel{}, DelaySchedule::none());
  CheckResult res{"sync-descent", false, 0.0, 0.0, ""};
  if (tr.aborted) {
    res.detail = "run aborted: " + tr.abort_reason;
    return res;
  }
  double worst = -1e300;
  std::size_t worst_k = 0;
  for (std::size_t k = 0; k + 1 < tr.objective.size(); ++k) {
    const double inc = tr.objective[k + 1] - tr.objective[k];
    if (inc > worst) {
      worst = inc;
      worst_k = k + 1;
    }
  }
  res.measured = worst;
  res.pass = worst <= 0.0;
  res.detail = "largest objective change at k=" + std::to_string(worst_k) +
               " over " + std::to_string(tr.objective.size() - 1) + " updates";
  return res;
}

struct NoiseDecayOptions {
  std::uint64_t seed = 10;
  std::size_t n = 500;
  std::size_t d = 5;
  double lambda = 0.5;
  unsigned tau = 3;
  double sigma0 = 0.1;
  std::uint64_t epochs = 200;
  std::uint64_t early_epochs = 20;
  double ratio_bound = 0.3;
  double divergence_factor = 10.0;
};

// Gaussian noise with polynomially decaying variance and matching stepsize
// shrinkage: the run must stay bounded and the min-stationarity envelope at
// the end must sit well below its early value.
inline CheckResult check_noise_decay(const NoiseDecayOptions& opt = {}) {
  StepsizePolicy policy;
  policy.regime = StepsizeRegime::kAlphaDiminishing;
  policy.alpha = 0.5;
  policy.a = 2.0;
  policy.tau = opt.tau;
  NoiseModel noise;
  noise.kind = NoiseKind::kGaussianDiminishing;
  noise.sigma0 = opt.sigma0;
  noise.alpha = 0.5;
  auto tr = detail::traced_factorization_run(
      opt.n, opt.d, opt.lambda, opt.epochs, opt.seed, RunMode::kSimAsync,
      policy, noise,
      DelaySchedule::iid_uniform(opt.tau,
                                 hash_mix(opt.seed, stream_tag::kDelay)));
  CheckResult res{"noise-decay", false, 0.0, opt.ratio_bound, ""};
  if (tr.aborted) {
    res.detail = "run aborted: " + tr.abort_reason;
    return res;
  }
  const double cap = opt.divergence_factor * tr.initial_objective;
  for (double v : tr.objective) {
    if (!(v <= cap)) {
      res.measured = v / tr.initial_objective;
      res.threshold = opt.divergence_factor;
      res.detail = "objective diverged past the cap";
      return res;
    }
  }
  const std::uint64_t m = 2;
  const std::size_t early = opt.early_epochs * m;
  double env_early = 1e300, env_final = 1e300;
  for (std::size_t i = 0; i < tr.stationarity.size(); ++i) {
    env_final = std::min(env_final, tr.stationarity[i]);
    if (i + 1 <= early) env_early = env_final;
  }
  res.measured = env_final / env_early;
  res.pass = res.measured <= opt.ratio_bound;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "min-envelope %.4g at %llu vs %.4g at %llu epochs",
                env_final, static_cast<unsigned long long>(opt.epochs),
                env_early, static_cast<unsigned long long>(opt.early_epochs));
  res.detail = buf;
  return res;
}

struct SmoothNoiseOptions {
  std::uint64_t seed = 11;
  std::size_t n = 100;
  std::size_t d = 3;
  double sigma0 = 0.1;
  std::uint64_t epochs = 200;
  double ratio_bound = 0.5;
};

// Unregularized problem under constant-variance noise with 1/sqrt(k+1)
// stepsize decay: iterates stay bounded and the gradient-norm envelope at
// the end is at most half its value at the 10% mark.
inline CheckResult check_smooth_noise_floor(const SmoothNoiseOptions& opt = {}) {
  StepsizePolicy policy;
  policy.regime = StepsizeRegime::kSmoothSqrt;
  policy.a = 2.0;
  NoiseModel noise;
  noise.kind = NoiseKind::kGaussianConstant;
  noise.sigma0 = opt.sigma0;
  auto tr = detail::traced_factorization_run(
      opt.n, opt.d, /*lambda=*/0.0, opt.epochs, opt.seed, RunMode::kSimAsync,
      policy, noise, DelaySchedule::none());
  CheckResult res{"smooth-noise-floor", false, 0.0, opt.ratio_bound, ""};
  if (tr.aborted) {
    res.detail = "run aborted: " + tr.abort_reason;
    return res;
  }
  for (double v : tr.objective) {
    if (!std::isfinite(v)) {
      res.detail = "objective became non-finite";
      return res;
    }
  }
  const std::size_t total = tr.stationarity.size();
  const std::size_t mark = std::max<std::size_t>(1, total / 10);
  double env_mark = 1e300, env_final = 1e300;
  for (std::size_t i = 0; i < total; ++i) {
    env_final = std::min(env_final, tr.stationarity[i]);
    if (i + 1 <= mark) env_mark = env_final;
  }
  res.measured = env_final / env_mark;
  res.pass = res.measured <= opt.ratio_bound;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "envelope %.4g final vs %.4g at k=%zu",
                env_final, env_mark, mark);
  res.detail = buf;
  return res;
}

struct StaleStressOptions {
  std::uint64_t seed = 12;
  std::size_t n = 100;
  std::size_t d = 3;
  double lambda = 0.5;
  unsigned tau = 10;
  std::uint64_t epochs = 50;
  double slack = 1.05;
};

// Every read maximally stale (constant delay equal to the bound the
// stepsizes are built for): the objective must end no higher than its
// initial value, with 5% slack.
inline CheckResult check_stale_read_stress(const StaleStressOptions& opt = {}) {
  StepsizePolicy policy;
  policy.regime = StepsizeRegime::kSummable;
  policy.a = 2.0;
  policy.tau = opt.tau;
  auto tr = detail::traced_factorization_run(
      opt.n, opt.d, opt.lambda, opt.epochs, opt.seed, RunMode::kSimAsync,
      policy, NoiseModel{}, DelaySchedule::constant(opt.tau));
  CheckResult res{"stale-read-stress", false, 0.0, opt.slack, ""};
  if (tr.aborted) {
    res.detail = "run aborted: " + tr.abort_reason;
    return res;
  }
  res.measured = tr.objective.back() / tr.initial_objective;
  res.pass = res.measured <= opt.slack;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "final objective %.6g vs initial %.6g",
                tr.objective.back(), tr.initial_objective);
  res.detail = buf;
  return res;
}

// ---------------------------------------------------------------------------
// Suite runner
// ---------------------------------------------------------------------------

inline std::vector<CheckResult> run_suite(const std::string& which) {
  std::vector<CheckResult> out;
  const bool all = which == "all";
  // "noise-regimes" groups every noise-related check; the longer lyapunov
  // name is accepted as an alias.
  const bool noise_group = which == "noise-regimes";
  const bool lyap = which == "lyapunov" || which == "lyapunov-supermartingale";
  if (all || which == "prox-oracle") out.push_back(check_prox_against_grid());
  if (all || which == "gradient-fd")
    out.push_back(check_gradient_finite_diff());
  if (all || which == "engine-equivalence")
    out.push_back(check_engine_equivalence());
  if (all || which == "sync-descent") out.push_back(check_sync_descent());
  if (all || lyap) out.push_back(check_lyapunov_decrease());
  if (all || which == "rate-slope") out.push_back(check_envelope_rate());
  if (all || noise_group || which == "noise-decay")
    out.push_back(check_noise_decay());
  if (all || noise_group || which == "smooth-noise-floor")
    out.push_back(check_smooth_noise_floor());
  if (all || which == "stale-read-stress")
    out.push_back(check_stale_read_stress());
  if (all || noise_group || which == "noise-stats")
    out.push_back(check_noise_statistics());
  if (all || noise_group || which == "minibatch")
    out.push_back(check_minibatch_estimator());
  if (all || which == "horizon-sampler")
    out.push_back(check_horizon_sampler());
  if (out.empty())
    throw ParameterError(
        "unknown verify suite '" + which +
        "'; expected one of prox-oracle, gradient-fd, engine-equivalence, "
        "sync-descent, lyapunov, rate-slope, noise-decay, "
        "smooth-noise-floor, stale-read-stress, noise-stats, noise-regimes, "
        "minibatch, horizon-sampler, all");
  return out;
}

}  // namespace sapalm::verify
