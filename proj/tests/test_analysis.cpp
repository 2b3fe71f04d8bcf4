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

#include "qselftest/analysis.hpp"
#include "qselftest/random_ops.hpp"
#include "oracles.hpp"

using namespace qst;
using namespace qst::oracle;
using Catch::Approx;

TEST_CASE("white-box gammas of the depolarized honest device match brute force", "[analysis]") {
  for (double p : {0.0, 0.05, 0.1, 0.2, 0.3, 1.0}) {
    const auto d = from_honest(p);
    CHECK(gamma_T(d).value == Approx(brute_gamma_T(p)).margin(1e-12));
    CHECK(gamma_B(d).value == Approx(brute_gamma_B(p)).margin(1e-12));
    // Both brute-force values reduce to p/2.
    CHECK(brute_gamma_T(p) == Approx(p / 2).margin(1e-12));
    CHECK(brute_gamma_B(p) == Approx(p / 2).margin(1e-12));
  }
}

TEST_CASE("tuple entries are ordered and bounded", "[analysis]") {
  const auto g = gamma_T(from_honest(0.2));
  REQUIRE(g.tuple.size() == 8);
  for (double e : g.tuple) {
    CHECK(e >= 0.0);
    CHECK(e <= 1.0 + 1e-12);
  }
  CHECK(g.tuple[0] == Approx(brute_entry(0, 1, 1, 0, 0.2)));
}

TEST_CASE("relabeled outcomes push gamma up", "[analysis]") {
  const auto d = flip_outcomes(from_honest(0.0), 0, 0, 1, 0);
  CHECK(gamma_T(d).value == Approx(1.0).margin(1e-12));  // Z1 always wrong on (0,1)
  CHECK(gamma_B(d).value == Approx(0.0).margin(1e-12));
  CHECK(validate(d).empty());
}

TEST_CASE("gammas stay in range for random measurements", "[analysis]") {
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    auto d = from_honest(0.1);
    for (int qq = 0; qq < 4; ++qq) d = replace_measurement(d, qq / 2, qq % 2, random_projective_measurement(4, rng));
    REQUIRE(validate(d).empty());
    const double gt = gamma_T(d).value, gb = gamma_B(d).value;
    CHECK(gt >= 0.0);
    CHECK(gt <= 1.0);
    CHECK(gb >= 0.0);
    CHECK(gb <= 1.0);
  }
}

TEST_CASE("residuals vanish on the honest device", "[analysis]") {
  const auto r = analyze(from_honest(0.0));
  for (const auto& [k, v] : r.anticomm) CHECK(v < 1e-24);
  for (const auto& [k, v] : r.comm) CHECK(v < 1e-24);
  for (const auto& [k, v] : r.pauli_residuals) CHECK(v < 1e-20);
  CHECK(r.max_bell_distance() < 1e-12);
  CHECK(r.warnings.empty());
}

TEST_CASE("anticommutator residual detects commuting observables", "[analysis]") {
  // Replace the X-basis measurement on both qubits by Z: Z1 and X1 then commute, {Z1, X1} = 2 Z1 Z1 = 2.
  auto d = from_honest(0.0);
  for (int v1 = 0; v1 < 2; ++v1)
    for (int v2 = 0; v2 < 2; ++v2) d.projector(1, 1, v1, v2) = product_projector(0, 0, v1, v2);
  CHECK(anticomm_residual(d, 1, 0, 0) == Approx(4.0));
  CHECK(anticomm_residual(d, 2, 1, 1) == Approx(4.0));
  CHECK_THROWS_AS(anticomm_residual(d, 3, 0, 0), StructuralError);
}

TEST_CASE("swap isometry is an isometry for random observables", "[analysis]") {
  Rng rng(8);
  for (Eigen::Index n : {2, 4, 8})
    for (int k = 0; k < 10; ++k) {
      const auto o = random_set(n, rng);
      const auto v = swap_isometry(o);
      CHECK(max_abs(v.adjoint() * v - identity(n)) < 1e-12);
    }
}

TEST_CASE("conjugation closed forms agree with the pulled-back Paulis", "[analysis]") {
  Rng rng(10);
  const auto sx = pauli_x(), sz = pauli_z(), i2 = identity(2);
  for (Eigen::Index n : {2, 4, 8})
    for (int k = 0; k < 10; ++k) {
      const auto o = random_set(n, rng);
      const auto v = swap_isometry(o);
      CHECK(max_abs(pulled_back(v, tensor(sz, i2)) - conj_formula_z_first(o)) < 1e-12);
      CHECK(max_abs(pulled_back(v, tensor(sx, i2)) - conj_formula_x_first(o)) < 1e-12);
      CHECK(max_abs(pulled_back(v, tensor(i2, sz)) - conj_formula_z_second(o)) < 1e-12);
      CHECK(max_abs(pulled_back(v, tensor(i2, sx)) - conj_formula_x_second(o)) < 1e-12);
    }
}

TEST_CASE("swap isometry maps honest Paulis to the ancilla", "[analysis]") {
  const auto o = marginal_observables(from_honest(0.0));
  const auto v = swap_isometry(o);
  // Anticommuting Paulis pull back exactly.
  CHECK(max_abs(pulled_back(v, tensor(pauli_x(), identity(2))) - o.X1) < 1e-14);
  CHECK(max_abs(pulled_back(v, tensor(identity(2), pauli_z())) - o.Z2) < 1e-14);
  CHECK(max_abs(pulled_back(v, tensor(identity(2), pauli_x())) - o.X2) < 1e-14);
}

TEST_CASE("Bell report on the depolarized honest device", "[analysis]") {
  for (double p : {0.0, 0.1, 0.2}) {
    const auto rep = bell_report(from_honest(p));
    REQUIRE(rep.size() == 4);
    for (const auto& b : rep) {
      // Branch weight 1/4 times ‖p (I/4 − Φ)‖₁ = 3p/2.
      CHECK(b.trace_distance == Approx(3.0 * p / 8.0).margin(1e-10));
      CHECK_FALSE(b.degenerate);
      CHECK(b.measurement_distances.size() == 16);
    }
  }
  double prev = -1.0;
  for (double p : {0.0, 0.1, 0.2, 0.3}) {
    const double m = analyze(from_honest(p)).max_bell_distance();
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("orthogonal Bell branches sit at distance one half", "[analysis]") {
  // Branch (s1,s2) prepares the Bell state of (s1 xor 1, s2): weight 1/4 times ‖Φ' − Φ‖₁ = 2.
  auto d = from_honest(0.0);
  for (auto& br : d.at(1, 1)) br.state = outer(bell_state(br.t1 ^ 1, br.t2));
  REQUIRE(validate(d).empty());
  for (const auto& b : bell_report(d)) CHECK(b.trace_distance == Approx(0.5).margin(1e-10));
}

TEST_CASE("a sign-flipped tilde observable shows up only in tilde residuals", "[analysis]") {
  // Flipping v1 on question (0,1) gives Zt1 = −Z1, so ‖Z1 − Zt1‖²_σ = ‖2 Z1‖²_σ = 4.
  const auto d = flip_outcomes(from_honest(0.0), 0, 1, 1, 0);
  REQUIRE(validate(d).empty());
  const auto res = pauli_rounding_report(d);
  int tilde = 0, plain = 0;
  for (const auto& [key, v] : res) {
    const auto name = key.substr(0, key.find('@'));
    if (name == "Zt1") {
      CHECK(v == Approx(4.0).margin(1e-9));
      ++tilde;
    } else if (name == "X1" || name == "Z2" || name == "X2" || name == "Xt1" || name == "Zt2") {
      CHECK(v == Approx(0.0).margin(1e-10));
      ++plain;
    }
  }
  CHECK(tilde == 4);
  CHECK(plain == 20);
}

TEST_CASE("residuals grow with the depolarizing strength", "[analysis]") {
  double prev = -1.0;
  for (double p : {0.0, 0.1, 0.2, 0.3}) {
    const double m = analyze(from_honest(p)).max_residual();
    CHECK(m >= prev - 1e-12);
    prev = m;
  }
}

TEST_CASE("degenerate Bell branch is reported", "[analysis]") {
  // Put all (1,1) weight on branch (0,0): the other branches have zero ξ.
  auto d = from_honest(0.0);
  auto& bs = d.at(1, 1);
  for (auto& br : bs) br.weight = (br.t1 == 0 && br.t2 == 0) ? 1.0 : 0.0;
  REQUIRE(validate(d).empty());
  std::vector<std::string> warnings;
  const auto rep = bell_report(d, &warnings);
  int degenerate = 0;
  for (const auto& b : rep) degenerate += b.degenerate;
  CHECK(degenerate == 3);
  CHECK(warnings.size() == 3);
}

TEST_CASE("interferometric estimator on fixed unitaries", "[analysis]") {
  // U1 = ZX, U2 = XZ = −ZX: plus vanishes, minus is 1.
  Rng rng(1);
  const DensityOperator psi(identity(2) / 2.0);
  const auto est = interferometric_norm_estimate(pauli_z() * pauli_x(), pauli_x() * pauli_z(), psi, 1000, rng);
  CHECK(est.exact_plus == Approx(0.0).margin(1e-14));
  CHECK(est.exact_minus == Approx(1.0));
  CHECK(est.plus == 0.0);
  // U1 = U2: plus is 1.
  const auto same = interferometric_norm_estimate(pauli_x(), pauli_x(), psi, 100, rng);
  CHECK(same.exact_plus == Approx(1.0));
  CHECK_THROWS_AS(interferometric_norm_estimate(2.0 * pauli_x(), pauli_x(), psi, 10, rng), ValidationError);
}

TEST_CASE("interferometric exact probabilities equal the state-dependent norms", "[analysis]") {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const ComplexMatrix c = random_binary_observable(4, rng), d = random_binary_observable(4, rng);
    const DensityOperator psi(random_density(4, rng));
    const auto est = interferometric_norm_estimate(c * d, d * c, psi, 10, rng);
    CHECK(est.exact_plus == Approx(0.25 * state_dep_norm_sq(c * d + d * c, ComplexMatrix::Zero(4, 4), psi)).margin(1e-12));
    CHECK(est.exact_minus == Approx(0.25 * state_dep_norm_sq(c * d, d * c, psi)).margin(1e-12));
  }
}

TEST_CASE("interferometric estimates are unbiased across runs", "[analysis]") {
  Rng rng(12);
  const ComplexMatrix c = random_binary_observable(3, rng), d = random_binary_observable(3, rng);
  const DensityOperator psi(random_density(3, rng));
  const std::size_t shots = 2000, runs = 50;
  double mean = 0.0, exact = 0.0;
  for (std::size_t k = 0; k < runs; ++k) {
    const auto est = interferometric_norm_estimate(c * d, d * c, psi, shots, rng);
    mean += est.plus / runs;
    exact = est.exact_plus;
    CHECK(est.plus + est.minus == Approx(1.0));
  }
  const double sigma = std::sqrt(exact * (1 - exact) / static_cast<double>(shots * runs));
  CHECK(std::abs(mean - exact) <= 3 * sigma);
}

TEST_CASE("report serializations", "[analysis]") {
  const auto r = analyze(from_honest(0.1));
  const auto j = report_to_json(r);
  CHECK(j["gamma_B"].get<double>() == Approx(0.05));
  CHECK(j["T_tuple"].size() == 8);
  CHECK(j["bell"].size() == 4);
  const auto csv = report_to_csv(r);
  CHECK(csv.rfind("metric,value\n", 0) == 0);
  CHECK(csv.find("gamma_T,") != std::string::npos);
}
