// Copyright 2026 The qselftest Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "qselftest/linalg.hpp"
#include "qselftest/rng.hpp"

namespace qst {

inline double gaussian(Rng& rng) {
  // Box-Muller on the portable uniform source.
  double u1 = rng.uniform();
  while (u1 <= 0.0) u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline ComplexMatrix random_ginibre(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  ComplexMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(gaussian(rng), gaussian(rng));
  return m;
}

// Haar-distributed unitary (QR of a Ginibre matrix with phase correction).
inline ComplexMatrix random_unitary(Eigen::Index n, Rng& rng) {
  const ComplexMatrix g = random_ginibre(n, n, rng);
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Complex d = r(k, k);
    const double a = std::abs(d);
    if (a > 0) q.col(k) *= d / a;
  }
  return q;
}

inline ComplexMatrix random_density(Eigen::Index n, Rng& rng) {
  const ComplexMatrix g = random_ginibre(n, n, rng);
  ComplexMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

// Random binary observable U diag(±1) U†; both eigenvalues present when n ≥ 2.
inline ComplexMatrix random_binary_observable(Eigen::Index n, Rng& rng) {
  const ComplexMatrix u = random_unitary(n, rng);
  Eigen::VectorXcd signs(n);
  for (Eigen::Index k = 0; k < n; ++k) signs(k) = rng.bit() ? -1.0 : 1.0;
  if (n >= 2) {
    signs(0) = 1.0;
    signs(1) = -1.0;
  }
  ComplexMatrix o = u * signs.asDiagonal() * u.adjoint();
  return 0.5 * (o + o.adjoint());
}

// Random 4-outcome projective measurement: a random orthonormal basis with
// each basis vector assigned to a random outcome.
inline std::array<ComplexMatrix, 4> random_projective_measurement(Eigen::Index n, Rng& rng) {
  const ComplexMatrix u = random_unitary(n, rng);
  std::array<ComplexMatrix, 4> out;
  for (auto& p : out) p = ComplexMatrix::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto outcome = (k < 4 && n >= 4) ? static_cast<std::size_t>(k) : static_cast<std::size_t>(rng.below(4));
    out[outcome] += u.col(k) * u.col(k).adjoint();
  }
  for (auto& p : out) p = 0.5 * (p + p.adjoint());
  return out;
}

}  // namespace qst
