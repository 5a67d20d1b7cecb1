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
// Per-block Lipschitz constants of the partial gradients, plus the small
// spectral-norm routine problems use to estimate them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sapalm/error.hpp"

namespace sapalm {

// Snapshot of gradient Lipschitz constants. Per-block values L_j bound the
// partial gradients; the separate global L bounds the full gradient and
// enters the delay penalty and the Lyapunov weight. Values stored here
// already include the multiplicative safety factor; `rho` is kept for
// reporting. By convention refreshes set L = rho * max_j L_j, one extra
// safety layer on the cross-block bound.
class LipschitzInfo {
 public:
  LipschitzInfo() = default;

  LipschitzInfo(std::vector<double> block_constants, double global, double rho)
      : block_(std::move(block_constants)), global_(global), rho_(rho) {
    if (block_.empty()) throw StructuralError("lipschitz: no blocks");
    if (!(rho_ >= 1.0)) throw ParameterError("lipschitz: rho must be >= 1");
    if (!(global_ > 0.0) || !std::isfinite(global_))
      throw ParameterError("lipschitz: global constant must be positive finite");
    for (double v : block_)
      if (!(v > 0.0) || !std::isfinite(v))
        throw ParameterError("lipschitz: constants must be positive finite");
  }

  std::size_t block_count() const { return block_.size(); }
  double block(std::size_t j) const { return block_.at(j); }
  double global() const { return global_; }
  double rho() const { return rho_; }

  double l_min() const { return *std::min_element(block_.begin(), block_.end()); }
  double l_max() const { return *std::max_element(block_.begin(), block_.end()); }

  const std::vector<double>& values() const { return block_; }

 private:
  std::vector<double> block_;
  double global_ = 1.0;
  double rho_ = 1.0;
};

namespace detail {
inline double squared(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}
}  // namespace detail

// Largest eigenvalue of a symmetric positive semidefinite d x d matrix
// (row-major), by power iteration. Deterministic start vector; converges
// geometrically for the Gram matrices seen here.
inline double symmetric_spectral_norm(std::span<const double> g, std::size_t d,
                                      int max_iters = 100,
                                      double rel_tol = 1e-10) {
  if (g.size() != d * d) throw StructuralError("spectral norm: bad shape");
  if (d == 0) return 0.0;
  if (d == 1) return std::fabs(g[0]);

  // Slightly tilted start so we never sit exactly orthogonal to the top
  // eigenvector of a structured matrix.
  std::vector<double> v(d), w(d);
  for (std::size_t r = 0; r < d; ++r) v[r] = 1.0 + 0.01 * static_cast<double>(r);
  double inv = 1.0 / std::sqrt(detail::squared(v));
  for (auto& x : v) x *= inv;

  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      const double* row = g.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) acc += row[c] * v[c];
      w[r] = acc;
    }
    double norm = std::sqrt(detail::squared(w));
    if (norm == 0.0) return 0.0;  // matrix is zero on this subspace
    const double lambda_new = norm;  // ||Gv|| with ||v||=1, PSD => Rayleigh limit
    inv = 1.0 / norm;
    for (std::size_t r = 0; r < d; ++r) v[r] = w[r] * inv;
    if (std::fabs(lambda_new - lambda) <=
        rel_tol * std::max(1.0, std::fabs(lambda_new)))
      return lambda_new;
    lambda = lambda_new;
  }
  return lambda;
}

// Safety-factored estimate with a positive floor, so stepsizes stay finite
// even when a block collapses to zero.
inline double apply_lipschitz_safety(double raw, double rho,
                                     double floor = 1e-8) {
  if (!(rho >= 1.0)) throw ParameterError("lipschitz: rho must be >= 1");
  if (!std::isfinite(raw) || raw < 0.0)
    throw ParameterError("lipschitz: raw estimate must be finite and >= 0");
  return std::max(rho * raw, floor);
}

}  // namespace sapalm
