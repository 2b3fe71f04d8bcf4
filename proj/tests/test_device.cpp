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

#include "qselftest/device.hpp"
#include "qselftest/random_ops.hpp"

using namespace qst;

TEST_CASE("honest device validates for every p", "[device]") {
  for (double p : {0.0, 0.1, 0.5, 1.0}) CHECK(validate(from_honest(p)).empty());
  CHECK_THROWS_AS(from_honest(-0.1), ValidationError);
  CHECK_THROWS_AS(from_honest(1.5), ValidationError);
}

TEST_CASE("honest marginal observables are two-qubit Paulis", "[device]") {
  const auto o = marginal_observables(from_honest(0.0));
  const auto z = pauli_z(), x = pauli_x(), i = identity(2);
  CHECK(max_abs(o.Z1 - tensor(z, i)) < 1e-14);
  CHECK(max_abs(o.X1 - tensor(x, i)) < 1e-14);
  CHECK(max_abs(o.Z2 - tensor(i, z)) < 1e-14);
  CHECK(max_abs(o.X2 - tensor(i, x)) < 1e-14);
  CHECK(max_abs(o.Zt1 - tensor(z, i)) < 1e-14);
  CHECK(max_abs(o.Xt2 - tensor(i, x)) < 1e-14);
  CHECK(max_abs(o.Xt1 - tensor(x, i)) < 1e-14);
  CHECK(max_abs(o.Zt2 - tensor(i, z)) < 1e-14);
}

TEST_CASE("sigma sums the branches", "[device]") {
  const auto d = from_honest(0.3);
  for (int th = 0; th < 4; ++th) {
    const auto s = sigma(d, th / 2, th % 2);
    CHECK(s.trace() == Catch::Approx(1.0));
    double parts = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) parts += sigma_partial(d, th / 2, a, th % 2, b).trace();
    CHECK(parts == Catch::Approx(1.0));
  }
  // Every computational branch in basis (0,0) averages to the maximally mixed state.
  CHECK(max_abs(sigma(d, 0, 0).matrix() - identity(4) / 4.0) < 1e-14);
}

TEST_CASE("validation reports each violated invariant", "[device]") {
  auto d = from_honest(0.0);
  d.projector(0, 0, 0, 0) *= 2.0;
  const auto vs = validate(d);
  REQUIRE_FALSE(vs.empty());
  bool idem = false, sum = false;
  for (const auto& v : vs) {
    idem |= v.what.find("idempotent") != std::string::npos;
    sum |= v.what.find("sum to identity") != std::string::npos;
  }
  CHECK(idem);
  CHECK(sum);
  CHECK_THROWS_AS(require_valid(d), ValidationError);

  auto w = from_honest(0.0);
  w.at(1, 1)[0].weight = 0.5;
  CHECK_FALSE(validate(w).empty());

  auto s = from_honest(0.0);
  s.at(0, 1)[2].state = -s.at(0, 1)[2].state;
  CHECK_FALSE(validate(s).empty());

  AbstractDevice big;
  big.dim = kMaxDeviceDim + 1;
  CHECK_FALSE(validate(big).empty());
}

TEST_CASE("device JSON roundtrip", "[device]") {
  const auto d = from_honest(0.2);
  const auto back = device_from_json(nlohmann::json::parse(device_to_json(d).dump()));
  CHECK(back.dim == d.dim);
  for (int th = 0; th < 4; ++th) {
    REQUIRE(back.branches[th].size() == d.branches[th].size());
    for (std::size_t k = 0; k < d.branches[th].size(); ++k) {
      CHECK(back.branches[th][k].t1 == d.branches[th][k].t1);
      CHECK(max_abs(back.branches[th][k].state - d.branches[th][k].state) == 0.0);
    }
  }
  CHECK(validate(back).empty());
  CHECK_THROWS_AS(device_from_json(nlohmann::json::object()), StructuralError);
  CHECK_THROWS_AS(device_from_json(nlohmann::json{{"dim", 4}, {"branches", nlohmann::json::object()}}),
                  StructuralError);
}

TEST_CASE("flip_outcomes permutes projectors", "[device]") {
  const auto d = from_honest(0.0);
  const auto f = flip_outcomes(d, 0, 1, 1, 0);
  CHECK(validate(f).empty());
  CHECK(max_abs(f.projector(0, 1, 1, 0) - d.projector(0, 1, 0, 0)) == 0.0);
  // Flipping twice is the identity.
  const auto ff = flip_outcomes(f, 0, 1, 1, 0);
  for (int v = 0; v < 4; ++v) CHECK(max_abs(ff.measurements[1][v] - d.measurements[1][v]) == 0.0);
}

TEST_CASE("register measurements expand to a block-diagonal global measurement", "[device]") {
  auto d = from_honest(0.1);
  Rng rng(6);
  MeasurementSet reg;
  for (int qq = 0; qq < 4; ++qq) reg[qq] = random_projective_measurement(4, rng);
  d.register_measurements.push_back(reg);
  for (auto& br : d.at(1, 1)) br.reg = 0;
  REQUIRE(validate(d).empty());
  const auto e = expand_registers(d);
  CHECK(e.dim == 8);
  CHECK_FALSE(e.has_registers());
  CHECK(validate(e).empty());
  // Outcome statistics are preserved branch by branch.
  for (std::size_t k = 0; k < d.at(1, 1).size(); ++k) {
    const auto& br = d.at(1, 1)[k];
    for (int v = 0; v < 4; ++v) {
      const double orig = (reg[1][v] * br.state).trace().real();
      const double exp = (e.measurements[1][v] * e.at(1, 1)[k].state).trace().real();
      CHECK(exp == Catch::Approx(orig).margin(1e-13));
    }
  }
  for (std::size_t k = 0; k < d.at(0, 0).size(); ++k) {
    const double orig = (d.measurements[0][0] * d.at(0, 0)[k].state).trace().real();
    const double exp = (e.measurements[0][0] * e.at(0, 0)[k].state).trace().real();
    CHECK(exp == Catch::Approx(orig).margin(1e-13));
  }
  CHECK_THROWS_AS(marginal_observables(d), StructuralError);
  const auto back = device_from_json(device_to_json(d));
  CHECK(back.has_registers());
  CHECK(validate(back).empty());
}
