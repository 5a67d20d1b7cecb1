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
// Proximal operators for the separable regularizers used by the library,
// together with the penalty values they minimize. Every operator here is
// elementwise; block versions just map the scalar kernel.
//
// prox_{gamma r}(y) = argmin_x { r(x) + ||x - y||^2 / (2 gamma) }.

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "sapalm/error.hpp"

namespace sapalm {

// ---------------------------------------------------------------------------
// Scalar kernels
// ---------------------------------------------------------------------------

// Soft thresholding: prox of t * |x| with threshold t = gamma * lambda >= 0.
inline double prox_l1_scalar(double y, double t) {
  if (y > t) return y - t;
  if (y < -t) return y + t;
  return 0.0;
}

// Firm thresholding. Zero inside [-gamma*lambda, gamma*lambda], linear ramp
// up to kappa, identity past kappa. Requires gamma*lambda < kappa so the
// ramp has positive slope and the operator is single-valued.
inline double prox_firm_scalar(double y, double gamma, double lambda,
                               double kappa) {
  const double t = gamma * lambda;
  const double a = std::fabs(y);
  if (a <= t) return 0.0;
  if (a <= kappa) {
    const double v = kappa * (a - t) / (kappa - t);
    return y < 0 ? -v : v;
  }
  return y;
}

// Penalty whose prox is firm thresholding (a minimax-concave penalty with
// the flat region starting at kappa). Needed to evaluate objectives for
// runs that use the firm operator.
inline double firm_penalty_scalar(double x, double lambda, double kappa) {
  const double a = std::fabs(x);
  if (a >= kappa) return kappa * lambda / 2.0;
  return lambda * a - lambda * a * a / (2.0 * kappa);
}

// prox of g(x) + (mu/2) x^2 given the prox of g:
//   prox_{gamma (g + mu/2 |.|^2)}(y) = prox_{gamma' g}(y'),
//   y' = y / (1 + gamma mu),  gamma' = gamma / (1 + gamma mu).
template <class BaseProx>
double prox_with_quadratic_scalar(BaseProx&& base_prox, double y, double gamma,
                                  double mu) {
  const double scale = 1.0 + gamma * mu;
  return base_prox(y / scale, gamma / scale);
}

// ---------------------------------------------------------------------------
// Parameter checks
// ---------------------------------------------------------------------------

inline void check_prox_l1_params(double t) {
  if (!(t >= 0.0)) throw ParameterError("l1 threshold must be >= 0");
}

inline void check_prox_firm_params(double gamma, double lambda, double kappa) {
  if (!(gamma > 0.0)) throw ParameterError("firm: gamma must be > 0");
  if (!(lambda >= 0.0)) throw ParameterError("firm: lambda must be >= 0");
  if (!(kappa > 0.0)) throw ParameterError("firm: kappa must be > 0");
  if (!(gamma * lambda < kappa))
    throw ParameterError("firm: requires gamma*lambda < kappa");
}

// ---------------------------------------------------------------------------
// Block versions
// ---------------------------------------------------------------------------

inline void prox_l1(std::span<const double> y, double t,
                    std::span<double> out) {
  check_prox_l1_params(t);
  if (y.size() != out.size()) throw StructuralError("prox_l1: size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = prox_l1_scalar(y[i], t);
}

inline void prox_firm(std::span<const double> y, double gamma, double lambda,
                      double kappa, std::span<double> out) {
  check_prox_firm_params(gamma, lambda, kappa);
  if (y.size() != out.size()) throw StructuralError("prox_firm: size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = prox_firm_scalar(y[i], gamma, lambda, kappa);
}

// ---------------------------------------------------------------------------
// Regularizer types. Each models: value(x), prox(y, gamma) elementwise.
// These are the building blocks problems compose per block.
// ---------------------------------------------------------------------------

struct ZeroReg {
  double value(double) const { return 0.0; }
  double prox(double y, double) const { return y; }
};

struct L1Reg {
  double lambda = 0.0;

  explicit L1Reg(double lambda_in = 0.0) : lambda(lambda_in) {
    if (!(lambda >= 0.0)) throw ParameterError("l1: lambda must be >= 0");
  }

  double value(double x) const { return lambda * std::fabs(x); }
  double prox(double y, double gamma) const {
    return prox_l1_scalar(y, gamma * lambda);
  }
};

struct FirmReg {
  double lambda = 0.0;
  double kappa = 1.0;

  FirmReg(double lambda_in, double kappa_in)
      : lambda(lambda_in), kappa(kappa_in) {
    if (!(lambda >= 0.0)) throw ParameterError("firm: lambda must be >= 0");
    if (!(kappa > 0.0)) throw ParameterError("firm: kappa must be > 0");
  }

  double value(double x) const { return firm_penalty_scalar(x, lambda, kappa); }
  double prox(double y, double gamma) const {
    check_prox_firm_params(gamma, lambda, kappa);
    return prox_firm_scalar(y, gamma, lambda, kappa);
  }
};

// base regularizer plus (mu/2) x^2, with the exact composed prox.
template <class Base>
struct WithQuadratic {
  Base base;
  double mu = 0.0;

  WithQuadratic(Base base_in, double mu_in)
      : base(std::move(base_in)), mu(mu_in) {
    if (!(mu >= 0.0)) throw ParameterError("quadratic: mu must be >= 0");
  }

  double value(double x) const { return base.value(x) + 0.5 * mu * x * x; }
  double prox(double y, double gamma) const {
    const double scale = 1.0 + gamma * mu;
    return base.prox(y / scale, gamma / scale);
  }
};

// Sum of value() over a block.
template <class Reg>
double reg_block_value(const Reg& reg, std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += reg.value(v);
  return acc;
}

template <class Reg>
void reg_block_prox(const Reg& reg, std::span<const double> y, double gamma,
                    std::span<double> out) {
  if (y.size() != out.size()) throw StructuralError("prox: size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = reg.prox(y[i], gamma);
}

// ---------------------------------------------------------------------------
// Name-based selection, for configs and generic problems.
// ---------------------------------------------------------------------------

struct ScalarRegularizer {
  std::string name;
  std::function<double(double)> value;          // penalty at x
  std::function<double(double, double)> prox;   // (y, gamma)
};

struct RegularizerParams {
  double lambda = 0.0;
  double kappa = 1.0;
  double mu = 0.0;  // quadratic term added on top when > 0
};

// Recognized names: "zero", "l1", "firm". A positive mu composes the
// quadratic term with the named base penalty.
inline ScalarRegularizer make_scalar_regularizer(const std::string& name,
                                                 const RegularizerParams& p) {
  ScalarRegularizer out;
  out.name = name;
  if (name == "zero") {
    ZeroReg r;
    out.value = [r](double x) { return r.value(x); };
    out.prox = [r](double y, double g) { return r.prox(y, g); };
  } else if (name == "l1") {
    L1Reg r(p.lambda);
    out.value = [r](double x) { return r.value(x); };
    out.prox = [r](double y, double g) { return r.prox(y, g); };
  } else if (name == "firm") {
    FirmReg r(p.lambda, p.kappa);
    out.value = [r](double x) { return r.value(x); };
    out.prox = [r](double y, double g) { return r.prox(y, g); };
  } else {
    throw ParameterError("unknown regularizer: " + name);
  }
  if (p.mu > 0.0) {
    auto base_value = out.value;
    auto base_prox = out.prox;
    const double mu = p.mu;
    out.name = name + "+quadratic";
    out.value = [base_value, mu](double x) {
      return base_value(x) + 0.5 * mu * x * x;
    };
    out.prox = [base_prox, mu](double y, double g) {
      const double scale = 1.0 + g * mu;
      return base_prox(y / scale, g / scale);
    };
  }
  return out;
}

}  // namespace sapalm
