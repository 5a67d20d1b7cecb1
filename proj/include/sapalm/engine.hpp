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
// The three execution engines:
//
//   run_sync      single worker, zero delay: the classical alternating
//                 proximal-gradient baseline.
//   run_sim_async single-threaded deterministic replay of the asynchronous
//                 update rule with an explicit delay schedule: at count k
//                 the gradient is evaluated on a composite iterate whose
//                 block j' holds the value from d(k, j') updates ago, while
//                 the prox anchors at the CURRENT block value.
//   run_async     p lock-free workers over shared memory plus a monitor
//                 thread. Scalar-granularity atomic access, last writer
//                 wins, no locks on the hot path.
//
// All three share one update routine, so a zero-delay sim-async run and a
// one-worker async run reproduce run_sync bit for bit (both selection
// rules; every engine drives the same cached column kernel in cyclic mode).

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/diagnostics.hpp"
#include "sapalm/error.hpp"
#include "sapalm/lipschitz.hpp"
#include "sapalm/problem.hpp"
#include "sapalm/rng.hpp"
#include "sapalm/schedules.hpp"
#include "sapalm/trace.hpp"

namespace sapalm {

// ---------------------------------------------------------------------------
// Shared iterate
// ---------------------------------------------------------------------------

static_assert(std::atomic_ref<double>::is_always_lock_free,
              "lock-free double access required");
static_assert(std::atomic<std::uint64_t>::is_always_lock_free,
              "lock-free counters required");

// Flat double array with scalar-atomic access, per-block version counters
// and the global update counter k. Invariant: k equals the sum of the
// block version counters (each completed update bumps both).
class SharedIterate {
 public:
  explicit SharedIterate(const BlockVector& x0)
      : layout_(x0.layout()),
        data_(x0.flat().begin(), x0.flat().end()),
        versions_(std::make_unique<PaddedCounter[]>(layout_.block_count())) {}

  const BlockLayout& layout() const { return layout_; }
  std::size_t block_count() const { return layout_.block_count(); }
  std::size_t block_size(std::size_t j) const { return layout_.block_size(j); }

  double load(std::size_t j, std::size_t i) const {
    return std::atomic_ref<double>(
               const_cast<double&>(data_[layout_.flat_index(j, i)]))
        .load(std::memory_order_relaxed);
  }

  void store(std::size_t j, std::size_t i, double v) {
    std::atomic_ref<double>(data_[layout_.flat_index(j, i)])
        .store(v, std::memory_order_relaxed);
  }

  std::uint64_t k() const { return k_.load(std::memory_order_acquire); }

  std::uint64_t version(std::size_t j) const {
    return versions_[j].v.load(std::memory_order_acquire);
  }

  // Completed-update accounting: block version first, then k.
  void complete_update(std::size_t j) {
    versions_[j].v.fetch_add(1, std::memory_order_acq_rel);
    k_.fetch_add(1, std::memory_order_acq_rel);
  }

  void snapshot_into(BlockVector& out) const {
    if (!(out.layout() == layout_))
      throw StructuralError("snapshot: layout mismatch");
    auto flat = out.flat();
    for (std::size_t i = 0; i < flat.size(); ++i)
      flat[i] = std::atomic_ref<double>(const_cast<double&>(data_[i]))
                    .load(std::memory_order_relaxed);
  }

  BlockVector snapshot() const {
    BlockVector out(layout_);
    snapshot_into(out);
    return out;
  }

 private:
  struct alignas(64) PaddedCounter {
    std::atomic<std::uint64_t> v{0};
  };

  BlockLayout layout_;
  std::vector<double> data_;
  std::unique_ptr<PaddedCounter[]> versions_;
  alignas(64) std::atomic<std::uint64_t> k_{0};
};

// Lightweight view over a SharedIterate satisfying IterateView.
struct SharedView {
  const SharedIterate* s = nullptr;

  double load(std::size_t j, std::size_t i) const { return s->load(j, i); }
  std::size_t block_count() const { return s->block_count(); }
  std::size_t block_size(std::size_t j) const { return s->block_size(j); }
};

// ---------------------------------------------------------------------------
// Delay schedules (sim-async)
// ---------------------------------------------------------------------------

// Pure function (k, j) -> d in {0..tau}, clamped to k so reads before the
// first update resolve to the initial point. Stateless by design: drawing
// delays must not disturb the engine's RNG stream, or a zero-delay replay
// could not reproduce the synchronous run.
class DelaySchedule {
 public:
  enum class Kind { kNone, kConstant, kIidUniform, kLaggedBlock };

  DelaySchedule() = default;

  static DelaySchedule none() { return DelaySchedule(); }

  static DelaySchedule constant(unsigned tau) {
    DelaySchedule s;
    s.kind_ = Kind::kConstant;
    s.tau_ = tau;
    return s;
  }

  static DelaySchedule iid_uniform(unsigned tau, std::uint64_t seed) {
    DelaySchedule s;
    s.kind_ = Kind::kIidUniform;
    s.tau_ = tau;
    s.seed_ = seed;
    return s;
  }

  // One block is always tau-stale, the others current.
  static DelaySchedule lagged_block(unsigned tau, std::size_t block) {
    DelaySchedule s;
    s.kind_ = Kind::kLaggedBlock;
    s.tau_ = tau;
    s.lagged_ = block;
    return s;
  }

  unsigned tau() const { return tau_; }
  Kind kind() const { return kind_; }

  unsigned delay(std::uint64_t k, std::size_t j) const {
    unsigned d = 0;
    switch (kind_) {
      case Kind::kNone: d = 0; break;
      case Kind::kConstant: d = tau_; break;
      case Kind::kIidUniform:
        d = static_cast<unsigned>(hash_mix(seed_, k, j) %
                                  (static_cast<std::uint64_t>(tau_) + 1));
        break;
      case Kind::kLaggedBlock: d = (j == lagged_) ? tau_ : 0; break;
    }
    const std::uint64_t cap = (k < tau_) ? k : tau_;
    return d > cap ? static_cast<unsigned>(cap) : d;
  }

 private:
  Kind kind_ = Kind::kNone;
  unsigned tau_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t lagged_ = 0;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class RunMode { kSync, kSimAsync, kAsync };
enum class BlockSelection { kUniform, kDedicatedCyclic };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::kSync: return "sync";
    case RunMode::kSimAsync: return "sim-async";
    case RunMode::kAsync: return "async";
  }
  return "?";
}

inline const char* to_string(BlockSelection s) {
  switch (s) {
    case BlockSelection::kUniform: return "uniform";
    case BlockSelection::kDedicatedCyclic: return "dedicated-cyclic";
  }
  return "?";
}

struct RunConfig {
  RunMode mode = RunMode::kSync;
  BlockSelection selection = BlockSelection::kUniform;
  unsigned workers = 1;             // async only
  std::uint64_t total_updates = 0;  // block updates (uniform) or coordinate
                                    // updates (dedicated-cyclic)
  std::uint64_t checkpoint_stride = 0;  // 0 = one epoch
  std::uint64_t seed = 0;
  StepsizePolicy policy;
  NoiseModel noise;
  DelaySchedule delays;  // sim-async only

  bool checkpoint_objective = true;
  bool checkpoint_stationarity = true;
  // Replace wall_time_s with the epoch count so traces are byte-identical
  // across machines (single-threaded modes only).
  bool virtual_time = false;
  // sim-async, uniform selection: the checkpointed stationarity uses the
  // gradient-plus-noise the update actually applied for the chosen block;
  // remaining blocks get an independent draw from a diagnostics stream.
  bool faithful_stationarity = false;
  // async: keep one record per completed update for accounting tests.
  bool record_update_log = false;
  unsigned monitor_poll_us = 200;

  // Observer called after every completed update. Single-threaded engines
  // always honor it; async accepts it only with workers == 1.
  std::function<void(std::uint64_t k, const BlockVector& x)> on_update;

  void validate() const {
    policy.validate();
    noise.validate();
    if (workers == 0) throw ParameterError("run config: workers must be >= 1");
    if (mode != RunMode::kAsync && workers != 1)
      throw ParameterError("run config: workers > 1 requires async mode");
    if (mode == RunMode::kSync && delays.tau() != 0)
      throw ParameterError("run config: sync mode cannot take delays");
    if (mode == RunMode::kAsync && delays.tau() != 0)
      throw ParameterError(
          "run config: async mode measures real delays; delay schedules are "
          "for sim-async");
    if (mode == RunMode::kSimAsync && delays.tau() > policy.tau)
      throw ParameterError(
          "run config: delay schedule tau exceeds the stepsize policy tau");
    if (mode == RunMode::kSimAsync &&
        selection == BlockSelection::kDedicatedCyclic && delays.tau() != 0)
      throw ParameterError(
          "run config: dedicated-cyclic simulation does not support delay "
          "schedules; use async mode for real cyclic delays");
    if (mode == RunMode::kAsync && virtual_time)
      throw ParameterError("run config: async mode always reports real time");
    if (faithful_stationarity &&
        (mode != RunMode::kSimAsync || selection != BlockSelection::kUniform))
      throw ParameterError(
          "run config: faithful stationarity requires sim-async mode with "
          "uniform selection");
    if (on_update && mode == RunMode::kAsync && workers > 1)
      throw ParameterError(
          "run config: per-update observer requires a single worker");
  }
};

template <class P>
struct RunResult {
  BlockVector x;
  RunTrace trace;
};

// Updates per epoch: uniform selection counts whole-block updates (one
// epoch = m of them); dedicated-cyclic counts coordinate updates (one
// epoch = one full sweep over every coordinate).
inline std::uint64_t updates_per_epoch(const BlockLayout& layout,
                                       BlockSelection selection) {
  if (selection == BlockSelection::kUniform) return layout.block_count();
  return layout.total_size();
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

namespace detail {

// Concurrent per-block Lipschitz constants plus the safety-factored global
// bound (rho times the largest block constant). Workers republish after
// each refresh; readers may see a slightly older refresh, which the
// stepsize rule tolerates.
class LipschitzState {
 public:
  LipschitzState(std::size_t m, double rho) : vals_(m, 0.0), rho_(rho) {}

  double block(std::size_t j) const {
    return std::atomic_ref<double>(const_cast<double&>(vals_[j]))
        .load(std::memory_order_relaxed);
  }

  double global() const {
    return std::atomic_ref<double>(const_cast<double&>(global_))
        .load(std::memory_order_relaxed);
  }

  void set_block(std::size_t j, double v) {
    std::atomic_ref<double>(vals_[j]).store(v, std::memory_order_relaxed);
    double mx = 0.0;
    for (std::size_t b = 0; b < vals_.size(); ++b) {
      const double x = block(b);
      if (x > mx) mx = x;
    }
    std::atomic_ref<double>(global_).store(rho_ * mx,
                                           std::memory_order_relaxed);
  }

  LipschitzInfo snapshot() const {
    std::vector<double> v(vals_.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = block(j);
    return LipschitzInfo(std::move(v), global(), rho_);
  }

  double rho() const { return rho_; }

 private:
  std::vector<double> vals_;
  double global_ = 0.0;
  double rho_;
};

inline void atomic_max(std::atomic<unsigned>& a, unsigned v) {
  unsigned cur = a.load(std::memory_order_relaxed);
  while (cur < v &&
         !a.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
  }
}

// Samples `count` indices from [0, space): distinct indices via a partial
// Fisher-Yates pass while the request fits the population, independent
// draws once it exceeds it (so the estimator's variance keeps scaling as
// 1/count instead of collapsing to the full batch).
inline std::span<const std::size_t> sample_batch(
    Rng& rng, std::size_t space, std::size_t count,
    std::vector<std::size_t>& buf) {
  if (count <= space) {
    if (buf.size() != space) buf.resize(space);
    for (std::size_t i = 0; i < space; ++i) buf[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t pick =
          i + static_cast<std::size_t>(rng.bounded(space - i));
      std::swap(buf[i], buf[pick]);
    }
    return {buf.data(), count};
  }
  if (buf.size() != count) buf.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    buf[i] = static_cast<std::size_t>(rng.bounded(space));
  return {buf.data(), count};
}

// anchor - gamma * g, then the block prox. Shared by every engine path and
// by the public single-step entry point.
template <class P>
void proximal_step(const P& p, std::size_t j, std::span<const double> anchor,
                   std::span<const double> g, double gamma,
                   std::span<double> out, Workspace& ws) {
  auto tmp = Workspace::ensure(ws.step, anchor.size());
  for (std::size_t i = 0; i < anchor.size(); ++i)
    tmp[i] = anchor[i] - gamma * g[i];
  p.prox_block(j, tmp, gamma, out);
}

inline bool span_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline std::string abort_message(const char* what, std::uint64_t k,
                                 std::size_t j) {
  return std::string(what) + " at update " + std::to_string(k) + ", block " +
         std::to_string(j);
}

// Whole-block gradient plus noise or minibatch estimator, written into
// ws.grad. RNG draw order is part of the determinism contract: a minibatch
// update draws batch indices instead of gaussian noise, never both.
template <class P, IterateView View>
std::span<double> block_direction(const P& p, std::size_t j, const View& view,
                                  const NoiseModel& noise, std::uint64_t k,
                                  Rng& rng, Workspace& ws) {
  const std::size_t nj = p.layout().block_size(j);
  auto g = Workspace::ensure(ws.grad, nj);
  if (noise.kind == NoiseKind::kMinibatch) {
    if constexpr (requires {
                    p.minibatch_block_gradient(
                        j, view, std::span<const std::size_t>{}, g, ws);
                  }) {
      auto batch = sample_batch(rng, p.minibatch_space(j),
                                minibatch_size(noise, k), ws.batch);
      p.minibatch_block_gradient(j, view, batch, g, ws);
      return g;
    } else {
      throw StructuralError("problem does not support minibatch gradients");
    }
  }
  p.block_gradient(j, view, g, ws);
  if (noise.kind != NoiseKind::kNone) {
    const double sd = noise_coord_stddev(noise, k, nj);
    if (sd != 0.0)
      for (std::size_t i = 0; i < nj; ++i) g[i] += rng.normal(0.0, sd);
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single update (public entry point used by tests and by callers stepping
// manually; the engines run the same sequence inline).
// ---------------------------------------------------------------------------

// One proximal step on block j: gradient at `x_read` (a possibly stale
// snapshot), prox anchored at `anchor` (the current block value; in the
// single-threaded engines that is the live iterate's block). Returns the
// new block value.
template <class P>
std::vector<double> sapalm_step(const P& p, const BlockVector& x_read,
                                std::span<const double> anchor, std::size_t j,
                                std::uint64_t k, const StepsizePolicy& policy,
                                const LipschitzInfo& lip,
                                const NoiseModel& noise, Rng& rng,
                                Workspace& ws) {
  const std::size_t nj = p.layout().block_size(j);
  if (anchor.size() != nj)
    throw StructuralError("sapalm_step: anchor size mismatch");
  const double gamma = stepsize(policy, lip, j, k);
  auto g = detail::block_direction(p, j, x_read, noise, k, rng, ws);
  std::vector<double> out(nj);
  detail::proximal_step(p, j, anchor, g, gamma, out, ws);
  if (!detail::span_finite(out))
    throw EngineError(detail::abort_message("non-finite step", k, j));
  return out;
}

template <class P>
std::vector<double> sapalm_step(const P& p, const BlockVector& x_read,
                                std::size_t j, std::uint64_t k,
                                const StepsizePolicy& policy,
                                const LipschitzInfo& lip,
                                const NoiseModel& noise, Rng& rng,
                                Workspace& ws) {
  return sapalm_step(p, x_read, x_read.block(j), j, k, policy, lip, noise,
                     rng, ws);
}

// ---------------------------------------------------------------------------
// Shared engine plumbing
// ---------------------------------------------------------------------------

namespace detail {

// Cyclic sweep geometry: coordinates grouped into contiguous columns of
// p.d() coordinates when the problem defines a column height, single
// coordinates otherwise. Columns of all blocks are concatenated into one
// global unit list.
template <class P>
std::size_t sweep_unit(const P& p, std::size_t j) {
  (void)j;
  if constexpr (requires { p.d(); }) {
    return p.d();
  } else {
    return 1;
  }
}

struct ColumnRef {
  std::size_t block;
  std::size_t column;  // column index within the block
  std::size_t unit;    // coordinates per column
};

template <class P>
std::vector<ColumnRef> column_order(const P& p) {
  std::vector<ColumnRef> cols;
  const auto& layout = p.layout();
  for (std::size_t j = 0; j < layout.block_count(); ++j) {
    const std::size_t unit = sweep_unit(p, j);
    const std::size_t nj = layout.block_size(j);
    if (nj % unit != 0)
      throw StructuralError("cyclic sweep: block size not divisible by unit");
    for (std::size_t c = 0; c < nj / unit; ++c) cols.push_back({j, c, unit});
  }
  return cols;
}

// Checkpoint bookkeeping. Owns a private workspace so evaluating the
// objective or the stationarity surrogate can never clobber buffers the
// engine loop holds live (the cyclic column kernel caches its residual in
// the loop's workspace).
template <class P>
class CheckpointWriter {
 public:
  CheckpointWriter(const P& p, const RunConfig& cfg, std::uint64_t per_epoch)
      : p_(p),
        cfg_(cfg),
        per_epoch_(per_epoch),
        stride_(cfg.checkpoint_stride ? cfg.checkpoint_stride : per_epoch) {}

  std::uint64_t stride() const { return stride_; }

  bool due(std::uint64_t k) const {
    return k % stride_ == 0 || k == cfg_.total_updates;
  }

  void record(RunTrace& trace, std::uint64_t k, const BlockVector& x,
              const LipschitzInfo& lip, const DeltaRing& deltas,
              unsigned max_delay, double wall_s, double faithful_value) {
    if (!trace.checkpoints.empty() && trace.checkpoints.back().k == k) return;
    CheckpointRecord rec;
    rec.k = k;
    rec.epoch = static_cast<double>(k) / static_cast<double>(per_epoch_);
    rec.wall_time_s = cfg_.virtual_time ? rec.epoch : wall_s;
    rec.c_k = regime_weight(cfg_.policy.regime, cfg_.policy.alpha, k);
    rec.max_delay = max_delay;
    rec.gammas.resize(p_.layout().block_count());
    for (std::size_t j = 0; j < rec.gammas.size(); ++j)
      rec.gammas[j] = stepsize(cfg_.policy, lip, j, k);
    const double nan = std::nan("");
    double obj = nan;
    if (cfg_.checkpoint_objective || cfg_.checkpoint_stationarity)
      obj = objective_value(p_, x, ws_);
    rec.objective = cfg_.checkpoint_objective ? obj : nan;
    if (cfg_.checkpoint_stationarity) {
      if (cfg_.faithful_stationarity && k > 0 &&
          std::isfinite(faithful_value)) {
        rec.stationarity = faithful_value;
      } else {
        rec.stationarity =
            stationarity_surrogate(p_, x, rec.gammas, ws_).value;
      }
      rec.lyapunov = lyapunov_from_deltas(obj, deltas, lip.global(),
                                          p_.layout().block_count());
    } else {
      rec.stationarity = nan;
      rec.lyapunov = nan;
    }
    trace.checkpoints.push_back(std::move(rec));
  }

 private:
  const P& p_;
  const RunConfig& cfg_;
  std::uint64_t per_epoch_;
  std::uint64_t stride_;
  Workspace ws_;
};

// Stationarity estimate tied to the update that just happened: the chosen
// block's term reuses the gradient-plus-noise the update applied (evaluated
// on its delayed read); every other block gets a fresh gradient at the
// current iterate plus an independent draw with the same marginal law from
// the diagnostics stream. Local buffers only: g_upd aliases ws.grad and the
// problem's gradient routines scratch in ws, so nothing here may write to
// the caller's spans.
template <class P>
double faithful_stationarity_value(const P& p, const BlockVector& x,
                                   std::size_t j_upd,
                                   std::span<const double> g_upd,
                                   std::uint64_t k, const RunConfig& cfg,
                                   const LipschitzState& lip, Rng& diag_rng,
                                   Workspace& ws) {
  const auto& layout = p.layout();
  const std::size_t m = layout.block_count();
  std::vector<double> gbuf, sbuf, wbuf;
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t nj = layout.block_size(j);
    const double gamma =
        stepsize_value(cfg.policy, lip.block(j), lip.global(), m, k);
    std::span<const double> g;
    if (j == j_upd) {
      g = g_upd;
    } else {
      gbuf.resize(nj);
      p.block_gradient(j, x, {gbuf.data(), nj}, ws);
      if (cfg.noise.kind != NoiseKind::kNone &&
          cfg.noise.kind != NoiseKind::kMinibatch) {
        const double sd = noise_coord_stddev(cfg.noise, k, nj);
        if (sd != 0.0)
          for (double& v : gbuf) v += diag_rng.normal(0.0, sd);
      }
      g = {gbuf.data(), nj};
    }
    auto anchor = x.block(j);
    sbuf.resize(nj);
    for (std::size_t i = 0; i < nj; ++i) sbuf[i] = anchor[i] - gamma * g[i];
    wbuf.resize(nj);
    p.prox_block(j, {sbuf.data(), nj}, gamma, {wbuf.data(), nj});
    for (std::size_t i = 0; i < nj; ++i) {
      const double diff = (wbuf[i] - anchor[i]) / gamma;
      total += diff * diff;
    }
  }
  return total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-threaded engines (sync and sim-async share this loop)
// ---------------------------------------------------------------------------

template <class P>
RunResult<P> run_single_threaded(const P& p, const BlockVector& x0,
                                 const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode == RunMode::kAsync)
    throw ParameterError("single-threaded runner cannot take async mode");
  const auto& layout = p.layout();
  const std::size_t m = layout.block_count();
  const bool sim = cfg.mode == RunMode::kSimAsync;
  const unsigned tau = sim ? cfg.delays.tau() : 0;

  RunResult<P> result{x0, {}};
  BlockVector& x = result.x;
  RunTrace& trace = result.trace;
  trace.updates_per_epoch = updates_per_epoch(layout, cfg.selection);

  Workspace ws;
  Rng rng = Rng::stream(cfg.seed, stream_tag::kWorkerBase + 0);
  Rng diag_rng = Rng::stream(cfg.seed, stream_tag::kDiagnostics);

  detail::LipschitzState lip(m, p.rho());
  for (std::size_t j = 0; j < m; ++j)
    lip.set_block(j, p.block_lipschitz(j, x, ws));

  DeltaRing deltas(cfg.policy.tau);
  detail::CheckpointWriter<P> writer(p, cfg, trace.updates_per_epoch);

  // History ring for delayed reads: slot k % (tau+1) holds the iterate as
  // of update count k. Delays are clamped to k, so reads before the first
  // update resolve to the initial point.
  std::vector<BlockVector> ring;
  BlockVector composite;
  if (sim && tau > 0) {
    ring.assign(tau + 1, x0);
    composite = x0;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  unsigned max_delay = 0;
  double faithful_value = std::nan("");
  trace.delay_histogram.assign(static_cast<std::size_t>(tau) + 1, 0);

  writer.record(trace, 0, x, lip.snapshot(), deltas, 0, wall(),
                faithful_value);

  const bool cyclic = cfg.selection == BlockSelection::kDedicatedCyclic;
  std::vector<detail::ColumnRef> columns;
  std::size_t cycle_start = 0, walked = 0;
  if (cyclic) columns = detail::column_order(p);

  auto abort_run = [&trace](const std::string& why, std::uint64_t at) {
    trace.summary.aborted = true;
    trace.summary.abort_reason = why;
    trace.summary.total_updates = at;
  };

  std::uint64_t k = 0;
  while (k < cfg.total_updates && !trace.summary.aborted) {
    if (sim && tau > 0) ring[k % (tau + 1)].copy_from(x);

    if (!cyclic) {
      // One whole-block update.
      const std::size_t j = static_cast<std::size_t>(rng.bounded(m));

      // Assemble the delayed read when any block is stale at this k.
      const BlockVector* read = &x;
      unsigned dmax_here = 0;
      if (sim && tau > 0) {
        bool stale = false;
        for (std::size_t jb = 0; jb < m; ++jb) {
          const unsigned d = cfg.delays.delay(k, jb);
          if (d > dmax_here) dmax_here = d;
          if (d > 0) stale = true;
        }
        if (stale) {
          for (std::size_t jb = 0; jb < m; ++jb) {
            const unsigned d = cfg.delays.delay(k, jb);
            const BlockVector& src = d == 0 ? x : ring[(k - d) % (tau + 1)];
            auto dst = composite.block(jb);
            auto s = src.block(jb);
            std::copy(s.begin(), s.end(), dst.begin());
          }
          read = &composite;
        }
        if (dmax_here > max_delay) max_delay = dmax_here;
      }
      trace.delay_histogram[dmax_here]++;

      lip.set_block(j, p.block_lipschitz(j, *read, ws));
      const double gamma =
          stepsize_value(cfg.policy, lip.block(j), lip.global(), m, k);
      auto g = detail::block_direction(p, j, *read, cfg.noise, k, rng, ws);

      auto anchor = x.block(j);  // current value: the prox anchor
      auto out = Workspace::ensure(ws.candidate, anchor.size());
      detail::proximal_step(p, j, anchor, g, gamma, out, ws);
      if (!detail::span_finite(out)) {
        abort_run(detail::abort_message("non-finite step", k, j), k);
        break;
      }

      if (cfg.faithful_stationarity)
        faithful_value = detail::faithful_stationarity_value(
            p, x, j, g, k, cfg, lip, diag_rng, ws);

      double d2 = 0.0;
      for (std::size_t i = 0; i < anchor.size(); ++i) {
        const double dd = out[i] - anchor[i];
        d2 += dd * dd;
      }
      std::copy(out.begin(), out.end(), anchor.begin());
      deltas.push(d2);

      ++k;
      if (cfg.on_update) cfg.on_update(k, x);
      if (writer.due(k))
        writer.record(trace, k, x, lip.snapshot(), deltas, max_delay, wall(),
                      faithful_value);
    } else {
      // One column of coordinate updates along the cyclic sweep. Each
      // cycle starts at a fresh random offset and refreshes the Lipschitz
      // constants once.
      if (walked == 0) {
        cycle_start = static_cast<std::size_t>(rng.bounded(columns.size()));
        for (std::size_t j = 0; j < m; ++j)
          lip.set_block(j, p.block_lipschitz(j, x, ws));
      }
      const auto& cref = columns[(cycle_start + walked) % columns.size()];
      const std::size_t j = cref.block;
      const std::size_t base = cref.column * cref.unit;

      constexpr bool kHasKernel =
          requires(const P& pp, const BlockVector& vv, Workspace& ww) {
            pp.make_coord_kernel(vv, ww);
          };
      auto step_rows = [&](auto* kernel) {
        for (std::size_t row = 0; row < cref.unit &&
                                  k < cfg.total_updates &&
                                  !trace.summary.aborted;
             ++row) {
          const std::size_t flat = base + row;
          const double gamma =
              stepsize_value(cfg.policy, lip.block(j), lip.global(), m, k);
          double g = 0.0;
          if (cfg.noise.kind == NoiseKind::kMinibatch) {
            if constexpr (requires {
                            p.coord_minibatch_gradient(
                                j, flat, x, std::span<const std::size_t>{},
                                ws);
                          }) {
              auto batch = detail::sample_batch(
                  rng, p.minibatch_space(j), minibatch_size(cfg.noise, k),
                  ws.batch);
              g = p.coord_minibatch_gradient(j, flat, x, batch, ws);
            } else {
              abort_run("problem does not support minibatch gradients", k);
              break;
            }
          } else {
            if constexpr (kHasKernel) {
              g = kernel->gradient(j, cref.column, row);
            } else {
              (void)kernel;
              g = p.coord_gradient(j, flat, x, ws);
            }
            const double sd =
                noise_coord_stddev(cfg.noise, k, layout.block_size(j));
            if (sd != 0.0) g += rng.normal(0.0, sd);
          }
          const double anchor = x.load(j, flat);
          const double cand = p.prox_coord(j, flat, anchor - gamma * g, gamma);
          if (!std::isfinite(cand)) {
            abort_run(detail::abort_message("non-finite step", k, j), k);
            break;
          }
          x.store(j, flat, cand);
          if constexpr (kHasKernel) {
            if (cfg.noise.kind != NoiseKind::kMinibatch)
              kernel->applied(j, cref.column, row, cand - anchor);
          }
          const double dd = cand - anchor;
          deltas.push(dd * dd);
          trace.delay_histogram[0]++;
          ++k;
          if (cfg.on_update) cfg.on_update(k, x);
          if (writer.due(k))
            writer.record(trace, k, x, lip.snapshot(), deltas, max_delay,
                          wall(), faithful_value);
        }
      };

      if constexpr (kHasKernel) {
        auto kernel = p.make_coord_kernel(x, ws);
        if (cfg.noise.kind != NoiseKind::kMinibatch)
          kernel.begin_column(j, cref.column);
        step_rows(&kernel);
      } else {
        int* no_kernel = nullptr;
        step_rows(no_kernel);
      }
      walked = (walked + 1) % columns.size();
    }
  }

  if (!trace.summary.aborted) {
    writer.record(trace, k, x, lip.snapshot(), deltas, max_delay, wall(),
                  faithful_value);
    trace.summary.total_updates = k;
  }
  trace.summary.elapsed_s = wall();
  trace.summary.updates_per_s =
      trace.summary.elapsed_s > 0
          ? static_cast<double>(trace.summary.total_updates) /
                trace.summary.elapsed_s
          : 0.0;
  trace.summary.max_observed_delay = max_delay;
  trace.summary.worker_block_map =
      cyclic ? "worker 0: all columns" : "worker 0: uniform random blocks";
  return result;
}

template <class P>
RunResult<P> run_sync(const P& p, const BlockVector& x0,
                      const RunConfig& cfg) {
  if (cfg.mode != RunMode::kSync)
    throw ParameterError("run_sync: config mode must be sync");
  return run_single_threaded(p, x0, cfg);
}

template <class P>
RunResult<P> run_sim_async(const P& p, const BlockVector& x0,
                           const RunConfig& cfg) {
  if (cfg.mode != RunMode::kSimAsync)
    throw ParameterError("run_sim_async: config mode must be sim-async");
  return run_single_threaded(p, x0, cfg);
}

// ---------------------------------------------------------------------------
// Asynchronous engine
// ---------------------------------------------------------------------------

template <class P>
RunResult<P> run_async(const P& p, const BlockVector& x0,
                       const RunConfig& cfg) {
  if (cfg.mode != RunMode::kAsync)
    throw ParameterError("run_async: config mode must be async");
  cfg.validate();

  const auto& layout = p.layout();
  const std::size_t m = layout.block_count();
  const unsigned workers = cfg.workers;
  const bool cyclic = cfg.selection == BlockSelection::kDedicatedCyclic;

  // Coordinate-granularity cyclic sweeps read the live shared iterate, so
  // the problem must accept a SharedView everywhere a coordinate update
  // needs one. Uniform selection works from per-update snapshots and has
  // no such requirement.
  constexpr bool kSharedCyclic =
      requires(const P& pp, const SharedView& vv, Workspace& ww,
               std::size_t j, std::size_t i) {
        { pp.coord_gradient(j, i, vv, ww) } -> std::convertible_to<double>;
        { pp.block_lipschitz(j, vv, ww) } -> std::convertible_to<double>;
      };
  if (cyclic && !kSharedCyclic)
    throw StructuralError(
        "dedicated-cyclic async needs coordinate access over the shared "
        "iterate; use uniform selection for this problem");

  RunResult<P> result{x0, {}};
  RunTrace& trace = result.trace;
  trace.updates_per_epoch = updates_per_epoch(layout, cfg.selection);
  trace.approximate_checkpoints = workers > 1;

  SharedIterate shared(x0);
  detail::LipschitzState lip(m, p.rho());
  {
    Workspace ws0;
    for (std::size_t j = 0; j < m; ++j)
      lip.set_block(j, p.block_lipschitz(j, x0, ws0));
  }

  std::atomic<bool> stop{false};
  std::atomic<bool> aborted{false};
  std::mutex abort_mu;
  std::string abort_reason;
  auto flag_abort = [&](const std::string& why) {
    bool expected = false;
    if (aborted.compare_exchange_strong(expected, true)) {
      std::lock_guard<std::mutex> g(abort_mu);
      abort_reason = why;
    }
    stop.store(true, std::memory_order_release);
  };

  std::vector<UpdateRecord> update_log;
  std::atomic<std::uint64_t> log_cursor{0};
  if (cfg.record_update_log)
    update_log.resize(cfg.total_updates + 4 * workers);

  struct WorkerStats {
    std::vector<std::uint64_t> hist;
    unsigned max_delay = 0;
    bool exceeded = false;
  };
  std::vector<WorkerStats> stats(workers);
  std::atomic<unsigned> live_max_delay{0};

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  auto note_delay = [&](WorkerStats& st, unsigned dobs) {
    if (dobs >= st.hist.size()) st.hist.resize(dobs + 1, 0);
    st.hist[dobs]++;
    if (dobs > st.max_delay) {
      st.max_delay = dobs;
      detail::atomic_max(live_max_delay, dobs);
    }
    if (dobs > cfg.policy.tau) st.exceeded = true;
  };

  auto log_update = [&](unsigned w, std::size_t j, std::size_t flat,
                        double value) {
    if (!cfg.record_update_log) return;
    const std::uint64_t seq =
        log_cursor.fetch_add(1, std::memory_order_relaxed);
    if (seq < update_log.size())
      update_log[seq] =
          UpdateRecord{w, static_cast<std::uint32_t>(j), flat, value};
  };

  // Worker body, uniform selection: whole-block updates from per-update
  // snapshots. The prox anchor is re-read fresh at write time so the step
  // contracts against the newest shared value of the chosen block.
  auto worker_uniform = [&](unsigned w) {
    Workspace ws;
    Rng rng = Rng::stream(cfg.seed, stream_tag::kWorkerBase + w);
    WorkerStats& st = stats[w];
    st.hist.assign(static_cast<std::size_t>(cfg.policy.tau) + 1, 0);
    std::vector<std::uint64_t> v_read(m);
    BlockVector snap(layout);
    BlockVector cb_snap(layout);

    while (!stop.load(std::memory_order_acquire)) {
      const std::uint64_t k_now = shared.k();
      if (k_now >= cfg.total_updates) {
        stop.store(true, std::memory_order_release);
        break;
      }
      const std::size_t j = static_cast<std::size_t>(rng.bounded(m));
      for (std::size_t b = 0; b < m; ++b) v_read[b] = shared.version(b);
      shared.snapshot_into(snap);

      lip.set_block(j, p.block_lipschitz(j, snap, ws));
      const double gamma =
          stepsize_value(cfg.policy, lip.block(j), lip.global(), m, k_now);
      std::span<double> g;
      try {
        g = detail::block_direction(p, j, snap, cfg.noise, k_now, rng, ws);
      } catch (const Error& e) {
        flag_abort(e.what());
        break;
      }

      const std::size_t nj = layout.block_size(j);
      auto anchor = Workspace::ensure(ws.anchor, nj);
      for (std::size_t i = 0; i < nj; ++i) anchor[i] = shared.load(j, i);
      auto out = Workspace::ensure(ws.candidate, nj);
      detail::proximal_step(p, j, anchor, g, gamma, out, ws);
      if (!detail::span_finite(out)) {
        flag_abort(detail::abort_message("non-finite step", k_now, j));
        break;
      }

      unsigned dobs = 0;
      for (std::size_t b = 0; b < m; ++b) {
        const std::uint64_t dv = shared.version(b) - v_read[b];
        if (dv > dobs) dobs = static_cast<unsigned>(dv);
      }
      double d2 = 0.0;
      for (std::size_t i = 0; i < nj; ++i) {
        const double dd = out[i] - anchor[i];
        d2 += dd * dd;
        shared.store(j, i, out[i]);
      }
      log_update(w, j, 0, d2);
      shared.complete_update(j);
      note_delay(st, dobs);
      if (cfg.on_update) {
        shared.snapshot_into(cb_snap);
        cfg.on_update(shared.k(), cb_snap);
      }
    }
  };

  // Worker body, dedicated-cyclic selection: each worker owns the columns
  // whose global index is congruent to its id modulo the worker count and
  // sweeps them cyclically from a fresh random offset each cycle, one
  // coordinate update at a time against the live shared iterate.
  auto worker_cyclic = [&](unsigned w) {
    if constexpr (kSharedCyclic) {
      Workspace ws;
      Rng rng = Rng::stream(cfg.seed, stream_tag::kWorkerBase + w);
      WorkerStats& st = stats[w];
      st.hist.assign(static_cast<std::size_t>(cfg.policy.tau) + 1, 0);
      SharedView view{&shared};
      BlockVector cb_snap(layout);

      const auto columns = detail::column_order(p);
      std::vector<detail::ColumnRef> own;
      for (std::size_t u = 0; u < columns.size(); ++u)
        if (u % workers == w) own.push_back(columns[u]);
      if (own.empty()) return;

      std::vector<std::uint64_t> v_read(m);
      std::size_t pos = 0, offset = 0;

      constexpr bool kHasKernel =
          requires(const P& pp, const SharedView& vv, Workspace& ww) {
            pp.make_coord_kernel(vv, ww);
          };

      auto run_columns = [&](auto* kernel) {
        while (!stop.load(std::memory_order_acquire)) {
          if (pos == 0) {
            offset = static_cast<std::size_t>(rng.bounded(own.size()));
            for (std::size_t j = 0; j < m; ++j)
              lip.set_block(j, p.block_lipschitz(j, view, ws));
          }
          const auto& cref = own[(offset + pos) % own.size()];
          const std::size_t j = cref.block;
          const std::size_t base = cref.column * cref.unit;

          const bool batched = cfg.noise.kind == NoiseKind::kMinibatch;
          if constexpr (kHasKernel) {
            if (!batched) kernel->begin_column(j, cref.column);
          }
          for (std::size_t b = 0; b < m; ++b) v_read[b] = shared.version(b);

          for (std::size_t row = 0; row < cref.unit; ++row) {
            const std::uint64_t k_now = shared.k();
            if (k_now >= cfg.total_updates) {
              stop.store(true, std::memory_order_release);
              return;
            }
            if (stop.load(std::memory_order_acquire)) return;
            const std::size_t flat = base + row;
            const double gamma = stepsize_value(cfg.policy, lip.block(j),
                                                lip.global(), m, k_now);
            double g = 0.0;
            if (batched) {
              if constexpr (requires {
                              p.coord_minibatch_gradient(
                                  j, flat, view,
                                  std::span<const std::size_t>{}, ws);
                            }) {
                auto batch = detail::sample_batch(
                    rng, p.minibatch_space(j),
                    minibatch_size(cfg.noise, k_now), ws.batch);
                g = p.coord_minibatch_gradient(j, flat, view, batch, ws);
              } else {
                flag_abort("problem does not support minibatch gradients");
                return;
              }
            } else {
              if constexpr (kHasKernel) {
                g = kernel->gradient(j, cref.column, row);
              } else {
                (void)kernel;
                g = p.coord_gradient(j, flat, view, ws);
              }
              const double sd =
                  noise_coord_stddev(cfg.noise, k_now, layout.block_size(j));
              if (sd != 0.0) g += rng.normal(0.0, sd);
            }
            const double anchor = shared.load(j, flat);
            const double cand =
                p.prox_coord(j, flat, anchor - gamma * g, gamma);
            if (!std::isfinite(cand)) {
              flag_abort(detail::abort_message("non-finite step", k_now, j));
              return;
            }
            unsigned dobs = 0;
            for (std::size_t b = 0; b < m; ++b) {
              const std::uint64_t dv = shared.version(b) - v_read[b];
              if (dv > dobs) dobs = static_cast<unsigned>(dv);
            }
            shared.store(j, flat, cand);
            if constexpr (kHasKernel) {
              if (!batched)
                kernel->applied(j, cref.column, row, cand - anchor);
            }
            log_update(w, j, flat, cand);
            shared.complete_update(j);
            note_delay(st, dobs);
            if (cfg.on_update) {
              shared.snapshot_into(cb_snap);
              cfg.on_update(shared.k(), cb_snap);
            }
          }
          pos = (pos + 1) % own.size();
        }
      };

      if constexpr (kHasKernel) {
        auto kernel = p.make_coord_kernel(view, ws);
        run_columns(&kernel);
      } else {
        int* no_kernel = nullptr;
        run_columns(no_kernel);
      }
    } else {
      (void)w;
    }
  };

  // Monitor state lives in this scope so the main thread can write the
  // exact final checkpoint with the same objects after the workers join.
  detail::CheckpointWriter<P> writer(p, cfg, trace.updates_per_epoch);
  DeltaRing mon_deltas(cfg.policy.tau);
  BlockVector mon_snap(layout);
  BlockVector mon_prev = x0;
  std::uint64_t next_cp = writer.stride();
  const double nan = std::nan("");

  writer.record(trace, 0, x0, lip.snapshot(), mon_deltas, 0, wall(), nan);

  std::atomic<bool> workers_done{false};
  std::thread monitor([&] {
    while (!workers_done.load(std::memory_order_acquire)) {
      std::this_thread::sleep_for(
          std::chrono::microseconds(cfg.monitor_poll_us));
      const std::uint64_t k_now = shared.k();
      if (k_now < next_cp) continue;
      shared.snapshot_into(mon_snap);
      mon_deltas.push(squared_distance(mon_snap, mon_prev));
      mon_prev.copy_from(mon_snap);
      writer.record(trace, k_now, mon_snap, lip.snapshot(), mon_deltas,
                    live_max_delay.load(std::memory_order_relaxed), wall(),
                    nan);
      while (next_cp <= k_now) next_cp += writer.stride();
    }
  });

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        if (cyclic)
          worker_cyclic(w);
        else
          worker_uniform(w);
      } catch (const std::exception& e) {
        flag_abort(std::string("worker ") + std::to_string(w) + ": " +
                   e.what());
      } catch (...) {
        flag_abort(std::string("worker ") + std::to_string(w) +
                   ": unknown error");
      }
    });
  }
  for (auto& t : pool) t.join();
  workers_done.store(true, std::memory_order_release);
  monitor.join();
  const double elapsed = wall();

  // Exact final checkpoint: workers have stopped, so this snapshot is a
  // true iterate. Replace a racing monitor record at the same k.
  const std::uint64_t k_final = shared.k();
  shared.snapshot_into(mon_snap);
  mon_deltas.push(squared_distance(mon_snap, mon_prev));
  if (!trace.checkpoints.empty() && trace.checkpoints.back().k == k_final)
    trace.checkpoints.pop_back();
  writer.record(trace, k_final, mon_snap, lip.snapshot(), mon_deltas,
                live_max_delay.load(std::memory_order_relaxed), elapsed, nan);

  result.x = shared.snapshot();

  trace.summary.total_updates = k_final;
  trace.summary.elapsed_s = elapsed;
  trace.summary.updates_per_s =
      elapsed > 0 ? static_cast<double>(k_final) / elapsed : 0.0;
  unsigned max_delay = 0;
  bool exceeded = false;
  std::size_t hist_len = 1;
  for (const auto& st : stats) hist_len = std::max(hist_len, st.hist.size());
  trace.delay_histogram.assign(hist_len, 0);
  for (const auto& st : stats) {
    for (std::size_t d = 0; d < st.hist.size(); ++d)
      trace.delay_histogram[d] += st.hist[d];
    max_delay = std::max(max_delay, st.max_delay);
    exceeded = exceeded || st.exceeded;
  }
  trace.summary.max_observed_delay = max_delay;
  trace.summary.delay_exceeded_tau = exceeded;
  trace.summary.aborted = aborted.load();
  if (trace.summary.aborted) {
    std::lock_guard<std::mutex> g(abort_mu);
    trace.summary.abort_reason = abort_reason;
  }
  trace.summary.worker_block_map =
      cyclic ? std::to_string(workers) +
                   " workers, column index mod worker count"
             : std::to_string(workers) + " workers, uniform random blocks";
  if (cfg.record_update_log) {
    const std::uint64_t logged =
        std::min<std::uint64_t>(log_cursor.load(), update_log.size());
    update_log.resize(logged);
    trace.update_log = std::move(update_log);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mode dispatcher
// ---------------------------------------------------------------------------

template <class P>
RunResult<P> run(const P& p, const BlockVector& x0, const RunConfig& cfg) {
  switch (cfg.mode) {
    case RunMode::kSync: return run_sync(p, x0, cfg);
    case RunMode::kSimAsync: return run_sim_async(p, x0, cfg);
    case RunMode::kAsync: return run_async(p, x0, cfg);
  }
  throw ParameterError("run: unknown mode");
}

}  // namespace sapalm
