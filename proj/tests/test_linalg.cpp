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

#include <catch_amalgamated.hpp>

#include <cmath>

#include "qselftest/bits.hpp"
#include "qselftest/linalg.hpp"
#include "qselftest/matrix_json.hpp"
#include "qselftest/random_ops.hpp"
#include "qselftest/rng.hpp"

using namespace qst;
using Catch::Approx;

TEST_CASE("Pauli algebra", "[linalg]") {
  const auto x = pauli_x(), z = pauli_z(), y = pauli_y();
  CHECK(max_abs(x * x - identity(2)) == 0.0);
  CHECK(max_abs(z * x + x * z) == 0.0);
  // XZ = -iY
  CHECK(max_abs(x * z + std::complex<double>(0, 1) * y) < 1e-15);
}

TEST_CASE("tensor product follows the Kronecker layout", "[linalg]") {
  ComplexMatrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 5, 6, 7;
  const auto k = tensor(a, b);
  REQUIRE(k.rows() == 4);
  CHECK(k(0, 1) == std::complex<double>(5));
  CHECK(k(1, 2) == std::complex<double>(12));
  CHECK(k(3, 3) == std::complex<double>(28));
  CHECK(k(2, 0) == std::complex<double>(0));
}

TEST_CASE("partial trace of a product state", "[linalg]") {
  Rng rng(11);
  const ComplexMatrix r1 = random_density(2, rng), r2 = random_density(3, rng);
  const ComplexMatrix rho = tensor(r1, r2);
  CHECK(max_abs(partial_trace(rho, {2, 3}, 1) - r1) < 1e-13);
  CHECK(max_abs(partial_trace(rho, {2, 3}, 0) - r2) < 1e-13);
  CHECK_THROWS_AS(partial_trace(rho, {2, 2}, 0), StructuralError);
}

TEST_CASE("partial trace of a Bell state is maximally mixed", "[linalg]") {
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2) {
      const ComplexMatrix rho = outer(bell_state(s1, s2));
      CHECK(max_abs(partial_trace(rho, {2, 2}, 0) - identity(2) / 2.0) < 1e-15);
    }
}

TEST_CASE("Bell states are orthonormal and stabilized by Z X and X Z", "[linalg]") {
  const auto zx = tensor(pauli_z(), pauli_x()), xz = tensor(pauli_x(), pauli_z());
  for (int s = 0; s < 4; ++s) {
    const auto phi = bell_state(s / 2, s % 2);
    for (int t = 0; t < 4; ++t) {
      const double ip = std::abs(phi.dot(bell_state(t / 2, t % 2)));
      CHECK(ip == Approx(s == t ? 1.0 : 0.0).margin(1e-15));
    }
    // ZX eigenvalue (-1)^{s1}, XZ eigenvalue (-1)^{s2}
    CHECK(max_abs(zx * phi - (s / 2 ? -1.0 : 1.0) * phi) < 1e-15);
    CHECK(max_abs(xz * phi - (s % 2 ? -1.0 : 1.0) * phi) < 1e-15);
  }
}

TEST_CASE("trace distance", "[linalg]") {
  const DensityOperator a(outer(basis_state(0, 0))), b(outer(basis_state(1, 0))), c(outer(basis_state(0, 1)));
  CHECK(trace_distance(a, a) == Approx(0.0).margin(1e-15));
  // Full trace norm of the difference, no factor 1/2.
  CHECK(trace_distance(a, b) == Approx(2.0));
  // pure states: 2 sqrt(1 - |<0|+>|^2)
  CHECK(trace_distance(a, c) == Approx(std::sqrt(2.0)));
}

TEST_CASE("trace norm and operator norm of a diagonal matrix", "[linalg]") {
  ComplexMatrix d = ComplexMatrix::Zero(3, 3);
  d(0, 0) = 2;
  d(1, 1) = -3;
  d(2, 2) = 0.5;
  CHECK(trace_norm(d) == Approx(5.5));
  CHECK(operator_norm(d) == Approx(3.0));
  CHECK(min_eigenvalue(d) == Approx(-3.0));
}

TEST_CASE("validated wrappers reject bad inputs", "[linalg]") {
  ComplexMatrix notpsd = identity(2);
  notpsd(1, 1) = -0.5;
  CHECK_THROWS_AS(DensityOperator(notpsd), ValidationError);
  CHECK_THROWS_AS(DensityOperator(identity(2)), ValidationError);  // trace 2
  CHECK_NOTHROW(DensityOperator(identity(2) / 4.0, true));
  CHECK_THROWS_AS(BinaryObservable(2.0 * identity(2)), ValidationError);
  CHECK_THROWS_AS(Projector(ComplexMatrix(2.0 * identity(2))), ValidationError);
  CHECK_THROWS_AS(BinaryObservable(ComplexMatrix::Zero(2, 3)), StructuralError);
  ComplexMatrix nan = identity(2);
  nan(0, 1) = std::nan("");
  CHECK_THROWS(BinaryObservable(nan));
}

TEST_CASE("state-dependent norm", "[linalg]") {
  const ComplexMatrix psi = outer(basis_state(0, 0));
  // ‖Z − X‖²_ψ = ⟨0|(Z−X)†(Z−X)|0⟩ = 2
  CHECK(state_dep_norm_sq(pauli_z(), pauli_x(), psi) == Approx(2.0));
  CHECK(state_dep_norm_sq(pauli_z(), pauli_z(), psi) == Approx(0.0).margin(1e-15));
}

TEST_CASE("observable from measurement and back", "[linalg]") {
  const Projector m0(outer(basis_state(0, 1))), m1(outer(basis_state(1, 1)));
  const auto o = observable_from_measurement(m0, m1);
  CHECK(max_abs(o.matrix() - pauli_x()) < 1e-15);
  CHECK(max_abs(projector_of(o, 1).matrix() - m1.matrix()) < 1e-15);
}

TEST_CASE("random operators are valid", "[linalg]") {
  Rng rng(3);
  for (Eigen::Index n : {1, 2, 5}) {
    CHECK(is_unitary(random_unitary(n, rng)));
    CHECK_NOTHROW(DensityOperator(random_density(n, rng)));
    CHECK_NOTHROW(BinaryObservable(random_binary_observable(n, rng)));
    const auto pm = random_projective_measurement(n, rng);
    ComplexMatrix sum = ComplexMatrix::Zero(n, n);
    for (const auto& p : pm) {
      CHECK_NOTHROW(Projector(p));
      sum += p;
    }
    CHECK(max_abs(sum - identity(n)) < 1e-12);
  }
}

TEST_CASE("matrix JSON roundtrip", "[linalg]") {
  Rng rng(5);
  const ComplexMatrix u = random_unitary(3, rng);
  CHECK(max_abs(matrix_from_json(matrix_to_json(u)) - u) == 0.0);
  CHECK_THROWS(matrix_from_json(nlohmann::json::parse("[[1,2],[3]]")));
}

TEST_CASE("RNG streams are deterministic and separated", "[rng]") {
  Rng a = derive_stream(7, 3, StreamRole::verifier), b = derive_stream(7, 3, StreamRole::verifier);
  Rng c = derive_stream(7, 3, StreamRole::prover), d = derive_stream(7, 4, StreamRole::verifier);
  const auto va = a.next();
  CHECK(va == b.next());
  CHECK(va != c.next());
  CHECK(va != d.next());
  Rng r(1);
  for (int k = 0; k < 1000; ++k) {
    const auto v = r.below(7);
    CHECK(v < 7);
  }
}

TEST_CASE("BitString hex and inner product", "[bits]") {
  const auto a = BitString::from_uint(0b1011, 6), b = BitString::from_uint(0b0110, 6);
  CHECK(dot(a, b) == 1);  // overlap only at bit 1
  CHECK(BitString::from_hex(a.to_hex(), 6) == a);
  Rng rng(9);
  const auto r = BitString::random(67, rng);
  CHECK(BitString::from_hex(r.to_hex(), 67) == r);
  CHECK_THROWS(BitString::from_hex("zz", 8));
}
