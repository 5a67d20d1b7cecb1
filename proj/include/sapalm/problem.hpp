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
// The problem interface the engines drive. A problem is
//
//   minimize  f(x_1, ..., x_m) + sum_j r_j(x_j)
//
// with f block-smooth (Lipschitz partial gradients) and each r_j separable
// with a cheap prox. Engines are templated on the problem type; the
// documented interface is:
//
//   layout()                         -> const BlockLayout&
//   smooth_value(x, ws)              -> f(x), x a BlockVector snapshot
//   block_gradient(j, view, out, ws) -> grad_j f at `view`
//   reg_value(j, span)               -> r_j on a block
//   prox_block(j, y, gamma, out)     -> prox of gamma * r_j
//   prox_coord(j, i, y, gamma)       -> scalar prox (separable r_j)
//   block_lipschitz(j, view, ws)     -> safety-factored L_j estimate
//
// Optional (enable coordinate sweeps and minibatch gradients):
//
//   coord_gradient(j, i, view, ws)
//   make_coord_kernel(view, ws)       -> cached column sweep kernel
//   minibatch_space(j)                -> summation index count
//   minibatch_block_gradient(j, view, batch, out, ws)
//   coord_minibatch_gradient(j, i, view, batch, ws)
//
// `view` is any type with load(j, i) / block_count() / block_size(j);
// BlockVector for snapshots, SharedView for live shared memory.

#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/error.hpp"
#include "sapalm/lipschitz.hpp"
#include "sapalm/prox.hpp"

namespace sapalm {

// Anything scalar-addressable with a block shape.
template <class V>
concept IterateView = requires(const V& v, std::size_t j, std::size_t i) {
  { v.load(j, i) } -> std::convertible_to<double>;
  { v.block_count() } -> std::convertible_to<std::size_t>;
  { v.block_size(j) } -> std::convertible_to<std::size_t>;
};

// Reusable scratch buffers so the hot loops never allocate.
struct Workspace {
  std::vector<double> grad;
  std::vector<double> step;
  std::vector<double> anchor;
  std::vector<double> candidate;
  std::vector<double> noise;
  std::vector<double> residual;
  std::vector<double> row;
  std::vector<double> gram;
  std::vector<double> scratch;
  std::vector<std::size_t> batch;

  static std::span<double> ensure(std::vector<double>& buf, std::size_t n) {
    if (buf.size() < n) buf.resize(n);
    return {buf.data(), n};
  }
  static std::span<std::size_t> ensure_idx(std::vector<std::size_t>& buf,
                                           std::size_t n) {
    if (buf.size() < n) buf.resize(n);
    return {buf.data(), n};
  }
};

// ---------------------------------------------------------------------------
// GenericProblem: oracle-based instance for small experiments and tests.
// Oracles observe full snapshots; coordinate access falls back to a whole
// block gradient, which is fine at test sizes.
// ---------------------------------------------------------------------------

class GenericProblem {
 public:
  using ValueFn = std::function<double(const BlockVector&)>;
  using BlockGradFn =
      std::function<void(std::size_t, const BlockVector&, std::span<double>)>;
  using BlockLipFn = std::function<double(std::size_t, const BlockVector&)>;

  GenericProblem(BlockLayout layout, ValueFn value, BlockGradFn gradient,
                 std::vector<ScalarRegularizer> regs, BlockLipFn lipschitz,
                 double rho = 1.1)
      : layout_(std::move(layout)),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        regs_(std::move(regs)),
        lipschitz_(std::move(lipschitz)),
        rho_(rho) {
    if (!value_ || !gradient_ || !lipschitz_)
      throw StructuralError("generic problem: missing oracle");
    if (regs_.size() != layout_.block_count())
      throw StructuralError("generic problem: one regularizer per block");
    if (!(rho_ >= 1.0)) throw ParameterError("generic problem: rho must be >= 1");
  }

  const BlockLayout& layout() const { return layout_; }

  double smooth_value(const BlockVector& x, Workspace&) const {
    return value_(x);
  }

  void block_gradient(std::size_t j, const BlockVector& x,
                      std::span<double> out, Workspace&) const {
    if (out.size() != layout_.block_size(j))
      throw StructuralError("generic problem: gradient span size mismatch");
    gradient_(j, x, out);
  }

  double coord_gradient(std::size_t j, std::size_t i, const BlockVector& x,
                        Workspace& ws) const {
    auto g = Workspace::ensure(ws.grad, layout_.block_size(j));
    gradient_(j, x, g);
    return g[i];
  }

  double reg_value(std::size_t j, std::span<const double> xj) const {
    double acc = 0.0;
    for (double v : xj) acc += regs_[j].value(v);
    return acc;
  }

  void prox_block(std::size_t j, std::span<const double> y, double gamma,
                  std::span<double> out) const {
    if (y.size() != out.size())
      throw StructuralError("generic problem: prox size mismatch");
    for (std::size_t i = 0; i < y.size(); ++i)
      out[i] = regs_[j].prox(y[i], gamma);
  }

  double prox_coord(std::size_t j, std::size_t, double y, double gamma) const {
    return regs_[j].prox(y, gamma);
  }

  double block_lipschitz(std::size_t j, const BlockVector& x,
                         Workspace&) const {
    return apply_lipschitz_safety(lipschitz_(j, x), rho_);
  }

  double rho() const { return rho_; }
  const ScalarRegularizer& regularizer(std::size_t j) const { return regs_[j]; }

 private:
  BlockLayout layout_;
  ValueFn value_;
  BlockGradFn gradient_;
  std::vector<ScalarRegularizer> regs_;
  BlockLipFn lipschitz_;
  double rho_;
};

// Objective f(x) + sum_j r_j(x_j) from a snapshot.
template <class P>
double objective_value(const P& p, const BlockVector& x, Workspace& ws) {
  double acc = p.smooth_value(x, ws);
  for (std::size_t j = 0; j < p.layout().block_count(); ++j)
    acc += p.reg_value(j, x.block(j));
  return acc;
}

// Lipschitz snapshot over all blocks at the point `x`. The global constant
// takes one extra safety factor on top of the block maximum.
template <class P>
LipschitzInfo estimate_lipschitz(const P& p, const BlockVector& x,
                                 Workspace& ws) {
  std::vector<double> values(p.layout().block_count());
  for (std::size_t j = 0; j < values.size(); ++j)
    values[j] = p.block_lipschitz(j, x, ws);
  const double global =
      p.rho() * *std::max_element(values.begin(), values.end());
  return LipschitzInfo(std::move(values), global, p.rho());
}

}  // namespace sapalm
