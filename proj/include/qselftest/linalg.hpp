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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "qselftest/errors.hpp"

namespace qst {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

inline constexpr double kValidationTol = 1e-10;
inline constexpr double kReportTol = 1e-12;

inline double max_abs(const ComplexMatrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline void require_finite(const ComplexMatrix& a, const char* what) {
  if (!a.allFinite()) throw ValidationError(std::string(what) + ": matrix has non-finite entries");
}

inline void require_square(const ComplexMatrix& a, const char* what) {
  if (a.rows() != a.cols())
    throw StructuralError(std::string(what) + ": expected square matrix, got " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()));
}

inline void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw StructuralError(std::string(what) + ": dimension mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
}

inline ComplexMatrix identity(Eigen::Index n) { return ComplexMatrix::Identity(n, n); }

inline ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

inline ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

inline double hermiticity_defect(const ComplexMatrix& a) { return max_abs(a - a.adjoint()); }

inline ComplexMatrix outer(const StateVector& v) { return v * v.adjoint(); }

// Kronecker product A ⊗ B.
inline ComplexMatrix tensor(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline StateVector tensor(const StateVector& a, const StateVector& b) {
  StateVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

/// Traces out factor `which` of a square operator on ⊗_k C^{dims[k]}.
inline ComplexMatrix partial_trace(const ComplexMatrix& a, const std::vector<Eigen::Index>& dims, std::size_t which) {
  require_square(a, "partial_trace");
  if (which >= dims.size()) throw StructuralError("partial_trace: factor index out of range");
  for (auto d : dims)
    if (d <= 0) throw StructuralError("partial_trace: factor dimensions must be positive");
  const Eigen::Index total = std::accumulate(dims.begin(), dims.end(), Eigen::Index{1}, std::multiplies<>());
  if (total != a.rows())
    throw StructuralError("partial_trace: dims multiply to " + std::to_string(total) + " but operator has dimension " +
                          std::to_string(a.rows()));
  Eigen::Index left = 1;
  for (std::size_t k = 0; k < which; ++k) left *= dims[k];
  const Eigen::Index mid = dims[which];
  const Eigen::Index right = total / (left * mid);
  const Eigen::Index out_dim = left * right;
  ComplexMatrix out = ComplexMatrix::Zero(out_dim, out_dim);
  for (Eigen::Index l1 = 0; l1 < left; ++l1)
    for (Eigen::Index r1 = 0; r1 < right; ++r1)
      for (Eigen::Index l2 = 0; l2 < left; ++l2)
        for (Eigen::Index r2 = 0; r2 < right; ++r2) {
          Complex acc = 0;
          for (Eigen::Index m = 0; m < mid; ++m) acc += a((l1 * mid + m) * right + r1, (l2 * mid + m) * right + r2);
          out(l1 * right + r1, l2 * right + r2) = acc;
        }
  return out;
}

/// Sum of absolute eigenvalues of a Hermitian operator.
inline double trace_norm(const ComplexMatrix& hermitian) {
  require_square(hermitian, "trace_norm");
  if (hermitian.rows() == 0) return 0.0;
  const ComplexMatrix sym = 0.5 * (hermitian + hermitian.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

inline double min_eigenvalue(const ComplexMatrix& hermitian) {
  if (hermitian.rows() == 0) return 0.0;
  const ComplexMatrix sym = 0.5 * (hermitian + hermitian.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Largest singular value.
inline double operator_norm(const ComplexMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(a);
  return svd.singularValues()(0);
}

/// Positive semidefinite operator with trace at most one.
class DensityOperator {
 public:
  explicit DensityOperator(ComplexMatrix m, bool allow_subnormalized = false)
      : matrix_(std::move(m)), subnormalized_(allow_subnormalized) {
    require_square(matrix_, "DensityOperator");
    require_finite(matrix_, "DensityOperator");
    if (hermiticity_defect(matrix_) > kValidationTol) throw ValidationError("DensityOperator: not Hermitian");
    if (min_eigenvalue(matrix_) < -kValidationTol) throw ValidationError("DensityOperator: not positive semidefinite");
    const double tr = trace();
    if (tr > 1.0 + kValidationTol) throw ValidationError("DensityOperator: trace " + std::to_string(tr) + " exceeds 1");
    if (!allow_subnormalized && std::abs(tr - 1.0) > kValidationTol)
      throw ValidationError("DensityOperator: trace " + std::to_string(tr) + " is not 1");
  }

  static DensityOperator pure(const StateVector& v) { return DensityOperator(outer(v.normalized())); }
  static DensityOperator maximally_mixed(Eigen::Index n) {
    return DensityOperator(identity(n) / static_cast<double>(n));
  }

  const ComplexMatrix& matrix() const { return matrix_; }
  Eigen::Index dim() const { return matrix_.rows(); }
  double trace() const { return matrix_.trace().real(); }
  bool allows_subnormalized() const { return subnormalized_; }

 private:
  ComplexMatrix matrix_;
  bool subnormalized_;
};

/// Hermitian operator squaring to the identity.
class BinaryObservable {
 public:
  explicit BinaryObservable(ComplexMatrix m) : matrix_(std::move(m)) {
    require_square(matrix_, "BinaryObservable");
    require_finite(matrix_, "BinaryObservable");
    if (hermiticity_defect(matrix_) > kValidationTol) throw ValidationError("BinaryObservable: not Hermitian");
    const double sq = max_abs(matrix_ * matrix_ - identity(matrix_.rows()));
    if (sq > kValidationTol)
      throw ValidationError("BinaryObservable: square deviates from identity by " + std::to_string(sq));
  }

  const ComplexMatrix& matrix() const { return matrix_; }
  Eigen::Index dim() const { return matrix_.rows(); }

 private:
  ComplexMatrix matrix_;
};

/// Hermitian idempotent operator.
class Projector {
 public:
  explicit Projector(ComplexMatrix m) : matrix_(std::move(m)) {
    require_square(matrix_, "Projector");
    require_finite(matrix_, "Projector");
    if (hermiticity_defect(matrix_) > kValidationTol) throw ValidationError("Projector: not Hermitian");
    const double idem = max_abs(matrix_ * matrix_ - matrix_);
    if (idem > kValidationTol) throw ValidationError("Projector: not idempotent (defect " + std::to_string(idem) + ")");
  }

  const ComplexMatrix& matrix() const { return matrix_; }
  Eigen::Index dim() const { return matrix_.rows(); }

 private:
  ComplexMatrix matrix_;
};

/// Tr[(A−B)†(A−B)ψ], clamped at zero.
inline double state_dep_norm_sq(const ComplexMatrix& a, const ComplexMatrix& b, const ComplexMatrix& psi) {
  require_square(psi, "state_dep_norm_sq");
  require_same_shape(a, b, "state_dep_norm_sq");
  require_same_shape(a, psi, "state_dep_norm_sq");
  const ComplexMatrix diff = a - b;
  const Complex v = (diff.adjoint() * diff * psi).trace();
  return std::max(0.0, v.real());
}

inline double state_dep_norm_sq(const ComplexMatrix& a, const ComplexMatrix& b, const DensityOperator& psi) {
  return state_dep_norm_sq(a, b, psi.matrix());
}

// Projector onto the (−1)^b eigenspace.
inline Projector projector_of(const BinaryObservable& o, int b) {
  const double sign = (b & 1) ? -1.0 : 1.0;
  return Projector(0.5 * (identity(o.dim()) + sign * o.matrix()));
}

inline BinaryObservable observable_from_measurement(const Projector& m0, const Projector& m1) {
  require_same_shape(m0.matrix(), m1.matrix(), "observable_from_measurement");
  const auto n = m0.dim();
  const double completeness = max_abs(m0.matrix() + m1.matrix() - identity(n));
  if (completeness > kValidationTol) throw ValidationError("observable_from_measurement: M0 + M1 != I");
  const double orth = max_abs(m0.matrix() * m1.matrix());
  if (orth > kValidationTol) throw ValidationError("observable_from_measurement: M0 M1 != 0");
  return BinaryObservable(m0.matrix() - m1.matrix());
}

inline StateVector basis_state(int bit, int basis) {
  StateVector v(2);
  if (basis == 0) {
    v << (bit ? 0.0 : 1.0), (bit ? 1.0 : 0.0);
  } else {
    const double r = 1.0 / std::sqrt(2.0);
    v << r, (bit ? -r : r);
  }
  return v;
}

// |a⟩⟨a| ⊗ |b⟩⟨b| with qubit i read in basis q_i (0 computational, 1 Hadamard).
inline ComplexMatrix product_projector(int q1, int q2, int a, int b) {
  return tensor(ComplexMatrix(outer(basis_state(a, q1))), ComplexMatrix(outer(basis_state(b, q2))));
}

inline ComplexMatrix controlled_z() {
  ComplexMatrix m = identity(4);
  m(3, 3) = -1.0;
  return m;
}

/// (σ_X^{s1} ⊗ σ_X^{s2})(|00⟩ + |01⟩ + |10⟩ − |11⟩)/2
inline StateVector bell_state(int s1, int s2) {
  StateVector base(4);
  base << 0.5, 0.5, 0.5, -0.5;
  const ComplexMatrix x1 = (s1 & 1) ? pauli_x() : identity(2);
  const ComplexMatrix x2 = (s2 & 1) ? pauli_x() : identity(2);
  return tensor(x1, x2) * base;
}

inline double trace_distance(const DensityOperator& rho, const DensityOperator& sigma) {
  require_same_shape(rho.matrix(), sigma.matrix(), "trace_distance");
  return trace_norm(rho.matrix() - sigma.matrix());
}

inline bool is_unitary(const ComplexMatrix& u, double tol = kValidationTol) {
  return u.rows() == u.cols() && max_abs(u.adjoint() * u - identity(u.rows())) <= tol;
}

}  // namespace qst
