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

#include "qselftest/provers.hpp"

using namespace qst;
using Catch::Approx;

namespace {

// CZ applied to a product of computational/Hadamard basis states, built by hand.
StateVector cz_product(int basis1, int bit1, int basis2, int bit2) {
  auto qubit = [](int basis, int bit) {
    StateVector v(2);
    if (basis == 0) {
      v << (bit ? 0.0 : 1.0), (bit ? 1.0 : 0.0);
    } else {
      v << 1.0 / std::sqrt(2.0), (bit ? -1.0 : 1.0) / std::sqrt(2.0);
    }
    return v;
  };
  const StateVector a = qubit(basis1, bit1), b = qubit(basis2, bit2);
  StateVector out(4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out(2 * i + j) = a(i) * b(j) * ((i & j) ? -1.0 : 1.0);
  return out;
}

struct RunOutcome {
  std::map<std::string, int> verdicts;
  int bell_checked = 0, bell_passed = 0;
};

RunOutcome run(const std::string& strategy, int sessions, std::uint64_t seed = 1) {
  RunOutcome out;
  const auto factory = parse_strategy(strategy);
  for (int sid = 0; sid < sessions; ++sid) {
    VerifierSession vs(EntcfParams::ideal(), sid, derive_stream(seed, sid, StreamRole::verifier));
    ProverSession ps(factory(), derive_stream(seed, sid, StreamRole::prover),
                     [&vs](std::uint64_t, const std::array<PublicKey, 2>&) { return vs.record().trapdoors; });
    auto msg = vs.open();
    while (auto reply = ps.handle(msg)) msg = vs.handle(*reply);
    ++out.verdicts[*ps.verdict()];
    const auto& r = vs.record();
    if (r.basis.is_bell_case() && r.questions && (*r.questions)[0] != (*r.questions)[1]) {
      ++out.bell_checked;
      out.bell_passed += r.flag == Flag::ok;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("honest post-CZ state matches a hand-built CZ", "[provers]") {
  for (int f1 = 0; f1 < 2; ++f1)
    for (int f2 = 0; f2 < 2; ++f2)
      for (int c1 = 0; c1 < 2; ++c1)
        for (int c2 = 0; c2 < 2; ++c2) {
          const auto fam1 = f1 ? Family::F : Family::G, fam2 = f2 ? Family::F : Family::G;
          const auto got = honest_post_cz_state(fam1, c1, fam2, c2);
          CHECK(max_abs(got - cz_product(f1, c1, f2, c2)) < 1e-15);
        }
}

TEST_CASE("F-F post-CZ state is the Bell state indexed by the phases", "[provers]") {
  // Z1 X2 and X1 Z2 stabilizers carry (−1)^{u2} and (−1)^{u1}.
  const auto zx = tensor(pauli_z(), pauli_x()), xz = tensor(pauli_x(), pauli_z());
  for (int u1 = 0; u1 < 2; ++u1)
    for (int u2 = 0; u2 < 2; ++u2) {
      const auto psi = honest_post_cz_state(Family::F, u1, Family::F, u2);
      CHECK(max_abs(zx * psi - (u2 ? -1.0 : 1.0) * psi) < 1e-15);
      CHECK(max_abs(xz * psi - (u1 ? -1.0 : 1.0) * psi) < 1e-15);
    }
}

TEST_CASE("born sampling frequencies", "[provers]") {
  // |0+⟩: Z outcome 0 with certainty, X outcome 0 with certainty, Z on qubit 2 uniform.
  const ComplexMatrix rho = outer(tensor(basis_state(0, 0), basis_state(0, 1)));
  Rng rng(2);
  int ones = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const auto ab = born_sample(rho, 0, 1, rng);
    CHECK(ab[0] == 0);
    CHECK(ab[1] == 0);
    ones += born_sample(rho, 0, 0, rng)[1];
  }
  CHECK(static_cast<double>(ones) / n == Approx(0.5).margin(5 * std::sqrt(0.25 / n)));
}

TEST_CASE("honest prover is never rejected", "[provers]") {
  const auto out = run("honest", 400);
  CHECK(out.verdicts.count("fail_pre") == 0);
  CHECK(out.verdicts.count("fail_test") == 0);
  CHECK(out.verdicts.count("fail_bell") == 0);
  CHECK(out.verdicts.count("protocol_error") == 0);
  CHECK(out.bell_checked > 0);
}

TEST_CASE("classical guess passes preimage rounds and half the Bell checks", "[provers]") {
  const auto out = run("classical_guess", 4000);
  CHECK(out.verdicts.count("fail_pre") == 0);
  REQUIRE(out.bell_checked > 100);
  const double rate = static_cast<double>(out.bell_passed) / out.bell_checked;
  CHECK(rate == Approx(0.5).margin(5 * std::sqrt(0.25 / out.bell_checked)));
}

TEST_CASE("no_entangler fails the Bell checks half the time", "[provers]") {
  const auto out = run("no_entangler", 4000);
  REQUIRE(out.bell_checked > 100);
  const double rate = static_cast<double>(out.bell_passed) / out.bell_checked;
  CHECK(rate == Approx(0.5).margin(5 * std::sqrt(0.25 / out.bell_checked)));
}

TEST_CASE("faulty prover fails preimage rounds, perfected wrapper repairs it", "[provers]") {
  auto faulty = run("faulty:1", 200);
  CHECK(faulty.verdicts["fail_pre"] > 50);
  const auto fixed = run("perfected:faulty:0.5", 200);
  CHECK(fixed.verdicts.count("fail_pre") == 0);
  auto hopeless = run("perfected:faulty:1", 20);
  CHECK(hopeless.verdicts["aborted"] == 20);
}

TEST_CASE("perfected wrapper counts retries", "[provers]") {
  Rng vrng(3);
  Verifier v(EntcfParams::ideal(), 0, std::move(vrng));
  ProverContext ctx;
  ctx.params = EntcfParams::ideal();
  ctx.keys = v.start();
  ctx.trapdoors = v.record().trapdoors;
  Rng rng(4);
  PerfectedStrategy clean(std::make_unique<HonestStrategy>());
  clean.prepare(ctx, rng);
  CHECK(clean.attempts() == 1);
  CHECK(clean.retries() == 0);
  int max_retries = 0;
  for (int k = 0; k < 50; ++k) {
    PerfectedStrategy s(std::make_unique<FaultyStrategy>(0.7));
    s.prepare(ctx, rng);
    CHECK(s.self_check());
    max_retries = std::max(max_retries, s.retries());
  }
  CHECK(max_retries > 0);
  PerfectedStrategy never(std::make_unique<FaultyStrategy>(1.0), 5);
  CHECK_THROWS_AS(never.prepare(ctx, rng), AbortSessionError);
}

TEST_CASE("strategy parsing", "[provers]") {
  CHECK(parse_strategy("honest")()->name() == "honest");
  CHECK(parse_strategy("perfected:classical_guess")()->name() == "perfected:classical_guess");
  CHECK(parse_strategy("honest_depolarized:0.25")()->name() == "honest_depolarized:0.25");
  CHECK_THROWS_AS(parse_strategy("honest_depolarized:1.5"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("honest_depolarized:x"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("quantum_magic"), ConfigError);
}

TEST_CASE("oracle-dependent strategies abort without an oracle", "[provers]") {
  VerifierSession vs(EntcfParams::ideal(), 0, Rng(1));
  ProverSession ps(parse_strategy("honest")(), Rng(2), nullptr);
  const auto reply = ps.handle(vs.open());
  REQUIRE(reply);
  CHECK((*reply)["type"] == "abort");
  CHECK(vs.handle(*reply)["flag"] == "aborted");
}

TEST_CASE("replay oracle reproduces the verifier trapdoors", "[provers]") {
  const std::uint64_t seed = 42;
  for (std::uint64_t sid = 0; sid < 5; ++sid) {
    Verifier v(EntcfParams::lwe(), sid, derive_stream(seed, sid, StreamRole::verifier));
    const auto keys = v.start();
    const auto td = replay_oracle(seed)(sid, keys);
    CHECK(td[0] == v.record().trapdoors[0]);
    CHECK(td[1] == v.record().trapdoors[1]);
    CHECK_THROWS_AS(replay_oracle(seed + 1)(sid, keys), AbortSessionError);
  }
}
