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
// Stepsize and noise schedules. The stepsize for block j at count k is
//
//   gamma_j^k = 1 / (a * c_k * (L_j + 2 L tau / sqrt(m)))
//
// with a > 1, per-block constant L_j, uniform bound L = max_j L_j, delay
// bound tau and block count m. The weight c_k selects the regime:
// summable noise keeps c_k = 1, alpha-diminishing noise uses
// c_k = (k+1)^(1-alpha), and the smooth sqrt regime uses c_k = sqrt(k+1).

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "sapalm/error.hpp"
#include "sapalm/lipschitz.hpp"
#include "sapalm/rng.hpp"

namespace sapalm {

enum class StepsizeRegime {
  kSummable,          // c_k = 1
  kAlphaDiminishing,  // c_k = (k+1)^(1-alpha)
  kSmoothSqrt,        // c_k = sqrt(k+1)
};

inline const char* to_string(StepsizeRegime r) {
  switch (r) {
    case StepsizeRegime::kSummable: return "summable";
    case StepsizeRegime::kAlphaDiminishing: return "alpha-diminishing";
    case StepsizeRegime::kSmoothSqrt: return "smooth-sqrt";
  }
  return "?";
}

inline StepsizeRegime stepsize_regime_from_string(const std::string& s) {
  if (s == "summable") return StepsizeRegime::kSummable;
  if (s == "alpha-diminishing") return StepsizeRegime::kAlphaDiminishing;
  if (s == "smooth-sqrt") return StepsizeRegime::kSmoothSqrt;
  throw ParameterError("unknown stepsize regime: " + s);
}

struct StepsizePolicy {
  StepsizeRegime regime = StepsizeRegime::kSummable;
  double a = 2.0;       // slack factor, > 1
  double alpha = 0.5;   // exponent for the alpha-diminishing regime, in (0,1)
  unsigned tau = 0;     // delay bound entering the denominator

  void validate() const {
    if (!(a > 1.0)) throw ParameterError("stepsize: a must be > 1");
    if (regime == StepsizeRegime::kAlphaDiminishing &&
        !(alpha > 0.0 && alpha < 1.0))
      throw ParameterError("stepsize: alpha must lie in (0,1)");
  }
};

// Weight c_k for update count k (0-based).
inline double regime_weight(StepsizeRegime regime, double alpha,
                            std::uint64_t k) {
  const double kp1 = static_cast<double>(k) + 1.0;
  switch (regime) {
    case StepsizeRegime::kSummable: return 1.0;
    case StepsizeRegime::kAlphaDiminishing: return std::pow(kp1, 1.0 - alpha);
    case StepsizeRegime::kSmoothSqrt: return std::sqrt(kp1);
  }
  throw ParameterError("stepsize: bad regime");
}

// Core stepsize formula on raw constants. `l_block` is L_j, `l_global` the
// uniform bound, `m` the number of blocks.
inline double stepsize_value(const StepsizePolicy& policy, double l_block,
                             double l_global, std::size_t m, std::uint64_t k) {
  policy.validate();
  if (!(l_block > 0.0) || !(l_global > 0.0))
    throw ParameterError("stepsize: Lipschitz constants must be positive");
  if (m == 0) throw StructuralError("stepsize: m must be >= 1");
  const double c = regime_weight(policy.regime, policy.alpha, k);
  const double delay_term = 2.0 * l_global * static_cast<double>(policy.tau) /
                            std::sqrt(static_cast<double>(m));
  return 1.0 / (policy.a * c * (l_block + delay_term));
}

// Stepsize for block j at count k given a Lipschitz snapshot.
inline double stepsize(const StepsizePolicy& policy, const LipschitzInfo& lip,
                       std::size_t j, std::uint64_t k) {
  return stepsize_value(policy, lip.block(j), lip.global(), lip.block_count(),
                        k);
}

// ---------------------------------------------------------------------------
// Injected gradient noise
// ---------------------------------------------------------------------------

enum class NoiseKind {
  kNone,
  kGaussianSummable,     // sigma_k^2 = sigma0^2 (k+1)^(-q), q > 1
  kGaussianDiminishing,  // sigma_k^2 = sigma0^2 (k+1)^(-alpha)
  kGaussianConstant,     // sigma_k^2 = sigma0^2
  kMinibatch,            // estimator-induced noise, nothing injected
};

inline const char* to_string(NoiseKind n) {
  switch (n) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kGaussianSummable: return "gaussian-summable";
    case NoiseKind::kGaussianDiminishing: return "gaussian-diminishing";
    case NoiseKind::kGaussianConstant: return "gaussian-constant";
    case NoiseKind::kMinibatch: return "minibatch";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "none") return NoiseKind::kNone;
  if (s == "gaussian-summable") return NoiseKind::kGaussianSummable;
  if (s == "gaussian-diminishing") return NoiseKind::kGaussianDiminishing;
  if (s == "gaussian-constant") return NoiseKind::kGaussianConstant;
  if (s == "minibatch") return NoiseKind::kMinibatch;
  throw ParameterError("unknown noise kind: " + s);
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::kNone;
  double sigma0 = 0.0;            // sqrt of the k=0 total variance
  double alpha = 0.5;             // diminishing exponent / minibatch growth
  double summable_exponent = 1.5; // decay for the summable schedule, > 1
  std::size_t batch_base = 1;     // minibatch size floor b0

  void validate() const {
    if (!(sigma0 >= 0.0)) throw ParameterError("noise: sigma0 must be >= 0");
    switch (kind) {
      case NoiseKind::kGaussianSummable:
        if (!(summable_exponent > 1.0))
          throw ParameterError("noise: summable schedule needs exponent > 1");
        break;
      case NoiseKind::kGaussianDiminishing:
        if (!(alpha > 0.0 && alpha <= 1.0))
          throw ParameterError("noise: alpha must lie in (0,1]");
        break;
      case NoiseKind::kMinibatch:
        if (batch_base == 0)
          throw ParameterError("noise: batch_base must be >= 1");
        if (!(alpha >= 0.0))
          throw ParameterError("noise: minibatch alpha must be >= 0");
        break;
      default: break;
    }
  }

  // Matching stepsize regime: summable schedules keep c_k = 1; the
  // alpha-diminishing schedule (and the minibatch estimator, whose variance
  // decays the same way) pairs with c_k = (k+1)^(1-alpha).
  StepsizeRegime matching_regime() const {
    switch (kind) {
      case NoiseKind::kNone:
      case NoiseKind::kGaussianSummable: return StepsizeRegime::kSummable;
      case NoiseKind::kGaussianDiminishing:
      case NoiseKind::kMinibatch: return StepsizeRegime::kAlphaDiminishing;
      case NoiseKind::kGaussianConstant: return StepsizeRegime::kSmoothSqrt;
    }
    return StepsizeRegime::kSummable;
  }
};

// Total variance sigma_k^2 = E||nu^k||^2 of the injected block noise.
inline double noise_total_variance(const NoiseModel& model, std::uint64_t k) {
  const double kp1 = static_cast<double>(k) + 1.0;
  const double s2 = model.sigma0 * model.sigma0;
  switch (model.kind) {
    case NoiseKind::kNone:
    case NoiseKind::kMinibatch: return 0.0;
    case NoiseKind::kGaussianSummable:
      return s2 * std::pow(kp1, -model.summable_exponent);
    case NoiseKind::kGaussianDiminishing:
      return s2 * std::pow(kp1, -model.alpha);
    case NoiseKind::kGaussianConstant: return s2;
  }
  return 0.0;
}

// Per-coordinate standard deviation such that a block of size n_j carries
// total variance sigma_k^2.
inline double noise_coord_stddev(const NoiseModel& model, std::uint64_t k,
                                 std::size_t block_size) {
  const double v = noise_total_variance(model, k);
  if (v == 0.0 || block_size == 0) return 0.0;
  return std::sqrt(v / static_cast<double>(block_size));
}

// Fills `out` with one noise draw for block j at count k. `block_size` is
// the full block dimension (used for the per-coordinate variance split even
// when `out` covers a single coordinate).
inline void sample_block_noise(const NoiseModel& model, std::uint64_t k,
                               std::size_t block_size, std::span<double> out,
                               Rng& rng) {
  const double sd = noise_coord_stddev(model, k, block_size);
  if (sd == 0.0) {
    for (auto& v : out) v = 0.0;
    return;
  }
  for (auto& v : out) v = rng.normal(0.0, sd);
}

// Minibatch size schedule m_k = ceil(b0 (k+1)^alpha), capped by the caller.
inline std::size_t minibatch_size(const NoiseModel& model, std::uint64_t k) {
  const double kp1 = static_cast<double>(k) + 1.0;
  const double raw =
      static_cast<double>(model.batch_base) * std::pow(kp1, model.alpha);
  return static_cast<std::size_t>(std::ceil(raw - 1e-12));
}

}  // namespace sapalm
