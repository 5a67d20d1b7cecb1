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
// Analysis quantities: the stationarity surrogate, the delay-aware
// Lyapunov function, and the horizon sampling distribution.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/error.hpp"
#include "sapalm/problem.hpp"
#include "sapalm/rng.hpp"
#include "sapalm/schedules.hpp"
#include "sapalm/trace.hpp"

namespace sapalm {

// ---------------------------------------------------------------------------
// Stationarity
// ---------------------------------------------------------------------------

struct StationaritySurrogate {
  double value = 0.0;              // sum over blocks
  std::vector<double> per_block;   // one term per block
  std::vector<double> gammas;      // the stepsizes used
};

// Deterministic prox-gradient residual at `x`:
//
//   S-hat = sum_j || (w_j - x_j) / gamma_j ||^2,
//   w_j   = prox_{gamma_j r_j}(x_j - gamma_j grad_j f(x)).
//
// Zero noise, zero delay. With r identically zero this reduces to
// ||grad f(x)||^2; at a prox-gradient fixed point it vanishes.
template <class P>
StationaritySurrogate stationarity_surrogate(const P& p, const BlockVector& x,
                                             std::span<const double> gammas,
                                             Workspace& ws) {
  const auto& layout = p.layout();
  const std::size_t m = layout.block_count();
  if (gammas.size() != m)
    throw StructuralError("stationarity: one stepsize per block required");
  StationaritySurrogate out;
  out.per_block.resize(m);
  out.gammas.assign(gammas.begin(), gammas.end());
  for (std::size_t j = 0; j < m; ++j) {
    const double gamma = gammas[j];
    if (!(gamma > 0.0))
      throw ParameterError("stationarity: stepsizes must be positive");
    const std::size_t nj = layout.block_size(j);
    auto g = Workspace::ensure(ws.grad, nj);
    p.block_gradient(j, x, g, ws);
    auto y = Workspace::ensure(ws.step, nj);
    auto xj = x.block(j);
    for (std::size_t i = 0; i < nj; ++i) y[i] = xj[i] - gamma * g[i];
    auto w = Workspace::ensure(ws.candidate, nj);
    p.prox_block(j, y, gamma, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < nj; ++i) {
      const double r = (w[i] - xj[i]) / gamma;
      acc += r * r;
    }
    out.per_block[j] = acc;
    out.value += acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lyapunov function
// ---------------------------------------------------------------------------

// Phi over an iterate history (newest first: history[h] is x(h), h = 0 the
// current point, h = tau the oldest):
//
//   Phi = f(x(0)) + r(x(0))
//       + (L / (2 sqrt(m))) * sum_{h=1}^{tau} (tau - h + 1) ||x(h) - x(h-1)||^2
//
// so the newest difference carries weight tau. At tau = 0 this is the
// plain objective.
template <class P>
double lyapunov_value(const P& p, std::span<const BlockVector> history,
                      double l_global, Workspace& ws) {
  if (history.empty()) throw StructuralError("lyapunov: empty history");
  const std::size_t tau = history.size() - 1;
  const double m = static_cast<double>(p.layout().block_count());
  double phi = objective_value(p, history[0], ws);
  if (tau == 0) return phi;
  double weighted = 0.0;
  for (std::size_t h = 1; h <= tau; ++h) {
    const double w = static_cast<double>(tau - h + 1);
    weighted += w * squared_distance(history[h], history[h - 1]);
  }
  return phi + l_global / (2.0 * std::sqrt(m)) * weighted;
}

// Incremental form used by the engines: keeps the last tau squared step
// lengths ||x^{t} - x^{t-1}||^2 and evaluates the weighted sum on demand.
// Entries before the first update count as zero, matching a history padded
// with the initial point.
class DeltaRing {
 public:
  explicit DeltaRing(unsigned tau) : buf_(tau, 0.0) {}

  void push(double delta_sq) {
    if (buf_.empty()) return;
    head_ = (head_ + 1) % buf_.size();
    buf_[head_] = delta_sq;
  }

  // sum_{h=1}^{tau} (tau - h + 1) * delta_sq[newest - h + 1]
  double weighted_sum() const {
    const std::size_t tau = buf_.size();
    double acc = 0.0;
    for (std::size_t h = 1; h <= tau; ++h) {
      const std::size_t idx = (head_ + tau - (h - 1)) % tau;
      acc += static_cast<double>(tau - h + 1) * buf_[idx];
    }
    return acc;
  }

  unsigned tau() const { return static_cast<unsigned>(buf_.size()); }

 private:
  std::vector<double> buf_;
  std::size_t head_ = 0;
};

inline double lyapunov_from_deltas(double objective, const DeltaRing& deltas,
                                   double l_global, std::size_t m) {
  if (deltas.tau() == 0) return objective;
  return objective + l_global / (2.0 * std::sqrt(static_cast<double>(m))) *
                         deltas.weighted_sum();
}

// ---------------------------------------------------------------------------
// Horizon sampling distribution
// ---------------------------------------------------------------------------

// Draws k in {0..T} with P(k) proportional to 1/c_k, where c_k is the
// stepsize weight schedule. Precomputes the cumulative weights once.
class HorizonSampler {
 public:
  HorizonSampler(std::uint64_t t_horizon, StepsizeRegime regime, double alpha)
      : cumulative_(t_horizon + 1) {
    double acc = 0.0;
    for (std::uint64_t k = 0; k <= t_horizon; ++k) {
      acc += 1.0 / regime_weight(regime, alpha, k);
      cumulative_[k] = acc;
    }
  }

  std::uint64_t draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    // first index with cumulative > u
    std::size_t lo = 0, hi = cumulative_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cumulative_[mid] > u)
        hi = mid;
      else
        lo = mid + 1;
    }
    return static_cast<std::uint64_t>(lo);
  }

  // Exact probability of index k under the normalized weights.
  double probability(std::uint64_t k) const {
    const double prev = (k == 0) ? 0.0 : cumulative_[k - 1];
    return (cumulative_[k] - prev) / cumulative_.back();
  }

 private:
  std::vector<double> cumulative_;
};

inline std::uint64_t sample_pt(std::uint64_t t_horizon, StepsizeRegime regime,
                               double alpha, Rng& rng) {
  return HorizonSampler(t_horizon, regime, alpha).draw(rng);
}

}  // namespace sapalm
