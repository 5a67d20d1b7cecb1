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
// Independent spectral-norm oracle for the tests: cyclic Jacobi rotations
// on a dense symmetric matrix. Shares no code with the library's power
// iteration, so agreement between the two is meaningful.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace testsupport {

// Eigenvalues of a row-major symmetric n x n matrix via cyclic Jacobi
// sweeps. Returns the diagonal after convergence.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a,
                                              std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-20) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i * n + p], aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p * n + i], aqi = a[q * n + i];
          a[p * n + i] = c * api - s * aqi;
          a[q * n + i] = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  return eig;
}

// Spectral norm of a symmetric positive semidefinite matrix: its largest
// eigenvalue.
inline double jacobi_spectral_norm(const std::vector<double>& a,
                                   std::size_t n) {
  const auto eig = jacobi_eigenvalues(a, n);
  double best = 0.0;
  for (double v : eig) best = std::max(best, std::abs(v));
  return best;
}

}  // namespace testsupport
