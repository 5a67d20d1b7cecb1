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
// Matrix factorization benchmark problems:
//
//   minimize over X, Y in R^{d x n}:
//     (1/2) ||A - X^T Y||_F^2  +  r(X) + r(Y)
//
// with A a fixed n x n data matrix and r one of the separable penalties
// from prox.hpp (l1 for the sparse variant, firm + quadratic for the firm
// variant). X is block 0, Y is block 1; both are stored column-major so a
// column (the natural sweep unit) is contiguous.
//
// Gradients, with residual R = A - X^T Y (n x n):
//   dF/dX = -Y R^T   i.e.  (dF/dX)_{a,b} = -sum_i Y_{a,i} R_{b,i}
//   dF/dY = -X R     i.e.  (dF/dY)_{a,i} = -sum_b X_{a,b} R_{b,i}
//
// dF/dX is linear in X with Hessian (Y Y^T) (x) I, so the exact block
// Lipschitz constant is the spectral norm of the d x d Gram matrix of the
// other factor.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sapalm/block_vector.hpp"
#include "sapalm/error.hpp"
#include "sapalm/lipschitz.hpp"
#include "sapalm/problem.hpp"
#include "sapalm/prox.hpp"
#include "sapalm/rng.hpp"

namespace sapalm {

// ---------------------------------------------------------------------------
// Data matrix
// ---------------------------------------------------------------------------

// Immutable n x n data matrix with iid standard normal entries, exactly
// reproducible from (n, seed). Keeps both row-major storage and the
// transpose so residual rows and columns are each contiguous.
struct FactorizationData {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<double> a;   // row-major: a[b*n + i] = A_{b,i}
  std::vector<double> at;  // transpose: at[i*n + b] = A_{b,i}

  static FactorizationData generate(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ParameterError("data: n must be >= 1");
    FactorizationData out;
    out.n = n;
    out.seed = seed;
    out.a.resize(n * n);
    Rng rng = Rng::stream(seed, stream_tag::kData);
    for (auto& v : out.a) v = rng.normal();  // row-major draw order
    out.rebuild_transpose();
    return out;
  }

  void rebuild_transpose() {
    at.resize(n * n);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < n; ++i) at[i * n + b] = a[b * n + i];
  }

  double entry(std::size_t b, std::size_t i) const { return a[b * n + i]; }

  // Binary persistence. Header: magic "SPLM", version u32, n u64, seed u64;
  // payload row-major 64-bit little-endian floats.
  void save(const std::string& path) const;
  static FactorizationData load(const std::string& path);
};

namespace detail {
static_assert(sizeof(double) == 8, "64-bit doubles required");

inline void io_fail(const std::string& path, const char* what) {
  throw IoError("data file " + path + ": " + what);
}
}  // namespace detail

inline void FactorizationData::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) detail::io_fail(path, "cannot open for writing");
  const char magic[4] = {'S', 'P', 'L', 'M'};
  const std::uint32_t version = 1;
  const std::uint64_t n64 = n;
  bool ok = std::fwrite(magic, 1, 4, f) == 4 &&
            std::fwrite(&version, sizeof version, 1, f) == 1 &&
            std::fwrite(&n64, sizeof n64, 1, f) == 1 &&
            std::fwrite(&seed, sizeof seed, 1, f) == 1 &&
            std::fwrite(a.data(), sizeof(double), a.size(), f) == a.size();
  ok = std::fclose(f) == 0 && ok;
  if (!ok) detail::io_fail(path, "write failed");
}

inline FactorizationData FactorizationData::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) detail::io_fail(path, "cannot open for reading");
  char magic[4] = {};
  std::uint32_t version = 0;
  std::uint64_t n64 = 0, seed64 = 0;
  FactorizationData out;
  bool ok = std::fread(magic, 1, 4, f) == 4 &&
            std::memcmp(magic, "SPLM", 4) == 0 &&
            std::fread(&version, sizeof version, 1, f) == 1 && version == 1 &&
            std::fread(&n64, sizeof n64, 1, f) == 1 && n64 >= 1 &&
            std::fread(&seed64, sizeof seed64, 1, f) == 1;
  if (ok) {
    out.n = static_cast<std::size_t>(n64);
    out.seed = seed64;
    out.a.resize(out.n * out.n);
    ok = std::fread(out.a.data(), sizeof(double), out.a.size(), f) ==
         out.a.size();
  }
  std::fclose(f);
  if (!ok) detail::io_fail(path, "bad header or truncated payload");
  out.rebuild_transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Problem
// ---------------------------------------------------------------------------

inline constexpr std::size_t kBlockX = 0;
inline constexpr std::size_t kBlockY = 1;

// Two-block factorization problem over a shared immutable data matrix.
// Template parameter Reg is the scalar regularizer applied to both blocks.
template <class Reg>
class FactorizationProblem {
 public:
  FactorizationProblem(std::shared_ptr<const FactorizationData> data,
                       std::size_t d, Reg reg, double rho = 1.1,
                       double lipschitz_floor = 1e-8)
      : data_(std::move(data)),
        d_(d),
        reg_(std::move(reg)),
        rho_(rho),
        lipschitz_floor_(lipschitz_floor) {
    if (!data_) throw StructuralError("factorization: null data");
    if (d_ == 0) throw ParameterError("factorization: d must be >= 1");
    if (!(rho_ >= 1.0)) throw ParameterError("factorization: rho must be >= 1");
    layout_ = BlockLayout({d_ * data_->n, d_ * data_->n});
  }

  const BlockLayout& layout() const { return layout_; }
  std::size_t n() const { return data_->n; }
  std::size_t d() const { return d_; }
  double rho() const { return rho_; }
  const Reg& reg() const { return reg_; }
  const FactorizationData& data() const { return *data_; }

  // Column c of block j starts at flat offset c*d within the block.
  static std::size_t coord_index(std::size_t d, std::size_t col,
                                 std::size_t row) {
    return col * d + row;
  }

  // f(X, Y) = 1/2 sum_{b,i} (A_{b,i} - <X_col_b, Y_col_i>)^2
  template <IterateView View>
  double smooth_value(const View& v, Workspace& ws) const {
    const std::size_t n = data_->n;
    auto xb = Workspace::ensure(ws.scratch, d_);
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < d_; ++c) xb[c] = v.load(kBlockX, b * d_ + c);
      const double* arow = data_->a.data() + b * n;
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d_; ++c)
          dot += xb[c] * v.load(kBlockY, i * d_ + c);
        const double r = arow[i] - dot;
        acc += r * r;
      }
    }
    return 0.5 * acc;
  }

  // Whole-block gradient. For block X, column b of the output needs the
  // residual row R_{b,:}; for block Y, column i needs the residual column
  // R_{:,i}. Both loops compute the needed residual slice once and then
  // accumulate the other factor's columns against it.
  template <IterateView View>
  void block_gradient(std::size_t j, const View& v, std::span<double> out,
                      Workspace& ws) const {
    check_block(j);
    const std::size_t n = data_->n;
    if (out.size() != d_ * n)
      throw StructuralError("factorization: gradient span size mismatch");
    const std::size_t other = 1 - j;
    auto own_col = Workspace::ensure(ws.scratch, d_);
    auto res = Workspace::ensure(ws.residual, n);
    // For block X the residual slice R_{b,:} indexes A row-major; for block
    // Y the slice R_{:,i} indexes the transpose. Either way `arow` is
    // contiguous in the summation index.
    const double* abase = (j == kBlockX) ? data_->a.data() : data_->at.data();
    for (std::size_t col = 0; col < n; ++col) {
      for (std::size_t c = 0; c < d_; ++c)
        own_col[c] = v.load(j, col * d_ + c);
      const double* arow = abase + col * n;
      for (std::size_t s = 0; s < n; ++s) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d_; ++c)
          dot += own_col[c] * v.load(other, s * d_ + c);
        res[s] = arow[s] - dot;
      }
      double* out_col = out.data() + col * d_;
      for (std::size_t c = 0; c < d_; ++c) out_col[c] = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double w = -res[s];
        for (std::size_t c = 0; c < d_; ++c)
          out_col[c] += w * v.load(other, s * d_ + c);
      }
    }
  }

  // Single-coordinate gradient, uncached: O(n d).
  template <IterateView View>
  double coord_gradient(std::size_t j, std::size_t flat, const View& v,
                        Workspace& ws) const {
    check_block(j);
    const std::size_t n = data_->n;
    const std::size_t col = flat / d_;
    const std::size_t row = flat % d_;
    const std::size_t other = 1 - j;
    auto own_col = Workspace::ensure(ws.scratch, d_);
    for (std::size_t c = 0; c < d_; ++c) own_col[c] = v.load(j, col * d_ + c);
    const double* arow =
        ((j == kBlockX) ? data_->a.data() : data_->at.data()) + col * n;
    double g = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d_; ++c)
        dot += own_col[c] * v.load(other, s * d_ + c);
      g -= v.load(other, s * d_ + row) * (arow[s] - dot);
    }
    return g;
  }

  double reg_value(std::size_t j, std::span<const double> xj) const {
    check_block(j);
    return reg_block_value(reg_, xj);
  }

  void prox_block(std::size_t j, std::span<const double> y, double gamma,
                  std::span<double> out) const {
    check_block(j);
    reg_block_prox(reg_, y, gamma, out);
  }

  double prox_coord(std::size_t j, std::size_t, double y, double gamma) const {
    check_block(j);
    return reg_.prox(y, gamma);
  }

  // L_j = rho * ||G G^T||_2 where G is the OTHER block; exact for this loss
  // since the partial gradient is linear in the own block.
  template <IterateView View>
  double block_lipschitz(std::size_t j, const View& v, Workspace& ws) const {
    check_block(j);
    const std::size_t other = 1 - j;
    const std::size_t n = data_->n;
    auto gram = Workspace::ensure(ws.gram, d_ * d_);
    auto col = Workspace::ensure(ws.scratch, d_);
    for (std::size_t c = 0; c < d_ * d_; ++c) gram[c] = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t c = 0; c < d_; ++c) col[c] = v.load(other, s * d_ + c);
      for (std::size_t a = 0; a < d_; ++a) {
        const double va = col[a];
        for (std::size_t b = a; b < d_; ++b) gram[a * d_ + b] += va * col[b];
      }
    }
    for (std::size_t a = 0; a < d_; ++a)
      for (std::size_t b = 0; b < a; ++b) gram[a * d_ + b] = gram[b * d_ + a];
    const double norm = symmetric_spectral_norm(gram, d_);
    return apply_lipschitz_safety(norm, rho_, lipschitz_floor_);
  }

  // ---------------------------------------------------------------------
  // Minibatch gradient estimator. The summation index of both partial
  // gradients runs over n columns of the other factor; sampling a subset S
  // and scaling by n/|S| gives an unbiased estimator. Indices are 0-based.
  // ---------------------------------------------------------------------

  std::size_t minibatch_space(std::size_t j) const {
    check_block(j);
    return data_->n;
  }

  template <IterateView View>
  void minibatch_block_gradient(std::size_t j, const View& v,
                                std::span<const std::size_t> batch,
                                std::span<double> out, Workspace& ws) const {
    check_block(j);
    const std::size_t n = data_->n;
    if (batch.empty()) throw ParameterError("minibatch: empty batch");
    if (out.size() != d_ * n)
      throw StructuralError("minibatch: gradient span size mismatch");
    const std::size_t other = 1 - j;
    const double scale =
        static_cast<double>(n) / static_cast<double>(batch.size());
    auto other_col = Workspace::ensure(ws.scratch, d_);
    auto own_col = Workspace::ensure(ws.row, d_);
    for (auto& o : out) o = 0.0;
    // abase rows are indexed by the own column; the summation index s picks
    // the A entry within the row, so residual terms use abase[col*n + s].
    const double* abase = (j == kBlockX) ? data_->a.data() : data_->at.data();
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
      const std::size_t s = batch[bi];
      if (s >= n) throw ParameterError("minibatch: index out of range");
      for (std::size_t c = 0; c < d_; ++c)
        other_col[c] = v.load(other, s * d_ + c);
      for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t c = 0; c < d_; ++c)
          own_col[c] = v.load(j, col * d_ + c);
        double dot = 0.0;
        for (std::size_t c = 0; c < d_; ++c) dot += own_col[c] * other_col[c];
        const double w = -scale * (abase[col * n + s] - dot);
        double* out_col = out.data() + col * d_;
        for (std::size_t c = 0; c < d_; ++c) out_col[c] += w * other_col[c];
      }
    }
  }

  template <IterateView View>
  double coord_minibatch_gradient(std::size_t j, std::size_t flat,
                                  const View& v,
                                  std::span<const std::size_t> batch,
                                  Workspace& ws) const {
    check_block(j);
    const std::size_t n = data_->n;
    if (batch.empty()) throw ParameterError("minibatch: empty batch");
    const std::size_t col = flat / d_;
    const std::size_t row = flat % d_;
    const std::size_t other = 1 - j;
    const double scale =
        static_cast<double>(n) / static_cast<double>(batch.size());
    auto own_col = Workspace::ensure(ws.scratch, d_);
    for (std::size_t c = 0; c < d_; ++c) own_col[c] = v.load(j, col * d_ + c);
    const double* arow =
        ((j == kBlockX) ? data_->a.data() : data_->at.data()) + col * n;
    double g = 0.0;
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
      const std::size_t s = batch[bi];
      if (s >= n) throw ParameterError("minibatch: index out of range");
      double dot = 0.0;
      for (std::size_t c = 0; c < d_; ++c)
        dot += own_col[c] * v.load(other, s * d_ + c);
      g -= v.load(other, s * d_ + row) * (arow[s] - dot);
    }
    return scale * g;
  }

  // ---------------------------------------------------------------------
  // Cached column sweep kernel for dedicated-cyclic mode. begin_column
  // computes the residual slice for one column in O(n d); each coordinate
  // then costs O(n) for the gradient plus O(n) to fold its own update back
  // into the cache. The other factor's row is buffered during the gradient
  // pass so the fold-back reuses the same values.
  // ---------------------------------------------------------------------

  template <IterateView View>
  class CoordKernel {
   public:
    CoordKernel(const FactorizationProblem& p, const View& v, Workspace& ws)
        : p_(p), v_(v), res_(ws.residual), other_row_(ws.row) {
      if (res_.size() < p_.n()) res_.resize(p_.n());
      if (other_row_.size() < p_.n()) other_row_.resize(p_.n());
      col_storage_.resize(p_.d());
    }

    void begin_column(std::size_t j, std::size_t col) {
      j_ = j;
      col_ = col;
      const std::size_t n = p_.n();
      const std::size_t d = p_.d();
      const std::size_t other = 1 - j;
      const double* arow =
          ((j == kBlockX) ? p_.data_->a.data() : p_.data_->at.data()) +
          col * n;
      double* own_col = col_storage_.data();
      for (std::size_t c = 0; c < d; ++c) own_col[c] = v_.load(j, col * d + c);
      for (std::size_t s = 0; s < n; ++s) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c)
          dot += own_col[c] * v_.load(other, s * d + c);
        res_[s] = arow[s] - dot;
      }
    }

    // Gradient of coordinate (col, row) using the cached residual slice.
    double gradient(std::size_t j, std::size_t col, std::size_t row) {
      if (j != j_ || col != col_)
        throw StructuralError("coord kernel: column not prepared");
      const std::size_t n = p_.n();
      const std::size_t d = p_.d();
      const std::size_t other = 1 - j;
      double g = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double o = v_.load(other, s * d + row);
        other_row_[s] = o;
        g -= o * res_[s];
      }
      return g;
    }

    // Folds the just-applied coordinate update back into the residual
    // cache. Must follow the matching gradient() call.
    void applied(std::size_t j, std::size_t col, std::size_t, double delta) {
      if (j != j_ || col != col_)
        throw StructuralError("coord kernel: column not prepared");
      if (delta == 0.0) return;
      const std::size_t n = p_.n();
      for (std::size_t s = 0; s < n; ++s) res_[s] -= delta * other_row_[s];
    }

   private:
    const FactorizationProblem& p_;
    const View& v_;
    std::vector<double>& res_;
    std::vector<double>& other_row_;
    std::vector<double> col_storage_;
    std::size_t j_ = static_cast<std::size_t>(-1);
    std::size_t col_ = static_cast<std::size_t>(-1);
  };

  template <IterateView View>
  CoordKernel<View> make_coord_kernel(const View& v, Workspace& ws) const {
    return CoordKernel<View>(*this, v, ws);
  }

 private:
  void check_block(std::size_t j) const {
    if (j > 1) throw StructuralError("factorization: block index out of range");
  }

  std::shared_ptr<const FactorizationData> data_;
  std::size_t d_;
  Reg reg_;
  double rho_;
  double lipschitz_floor_;
  BlockLayout layout_;
};

using SparsePcaProblem = FactorizationProblem<L1Reg>;
using FirmPcaProblem = FactorizationProblem<WithQuadratic<FirmReg>>;

// Sparse variant: l1 penalty with weight lambda on both blocks.
inline SparsePcaProblem make_sparse_pca(
    std::shared_ptr<const FactorizationData> data, std::size_t d,
    double lambda, double rho = 1.1) {
  return SparsePcaProblem(std::move(data), d, L1Reg(lambda), rho);
}

// Firm variant: firm penalty plus (mu/2)||.||^2 on both blocks, with the
// quadratic term folded into the regularizer's prox. Requires lambda < kappa.
inline FirmPcaProblem make_firm_pca(
    std::shared_ptr<const FactorizationData> data, std::size_t d,
    double lambda, double kappa, double mu, double rho = 1.1) {
  if (!(lambda < kappa))
    throw ParameterError("firm pca: requires lambda < kappa");
  return FirmPcaProblem(std::move(data), d,
                        WithQuadratic<FirmReg>(FirmReg(lambda, kappa), mu),
                        rho);
}

// Seeded starting point: X, Y entries iid N(0, 1/sqrt(d)), i.e. standard
// deviation d^(-1/4), which keeps ||X^T Y|| on the scale of ||A||.
inline BlockVector initial_factorization_point(std::size_t d, std::size_t n,
                                               std::uint64_t seed) {
  BlockVector x(BlockLayout({d * n, d * n}));
  Rng rng = Rng::stream(seed, stream_tag::kInit);
  const double sd = std::pow(static_cast<double>(d), -0.25);
  rng.fill_normal(x.block(kBlockX), 0.0, sd);
  rng.fill_normal(x.block(kBlockY), 0.0, sd);
  return x;
}

}  // namespace sapalm
