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

#include "qselftest/protocol.hpp"

using namespace qst;

namespace {

// Check table written out per basis pair, one branch per checked leg.
Flag table_flag(int t1, int t2, int q1, int q2, int b1, int b2, int u1, int u2, int v1, int v2) {
  if (t1 == 0 && t2 == 0) return Flag::none;
  if (t1 == 1 && t2 == 1) {
    if (q1 == 0 && q2 == 1) return (v1 ^ v2) == u2 ? Flag::ok : Flag::fail_bell;
    if (q1 == 1 && q2 == 0) return (v1 ^ v2) == u1 ? Flag::ok : Flag::fail_bell;
    return Flag::ok;
  }
  bool bad = false;
  if (t1 == 0) {  // leg 1 injective, leg 2 claw-free
    if (q1 == 0) bad |= v1 != b1;
    if (q2 == 1) bad |= v2 != (u2 ^ b1);
  } else {
    if (q1 == 1) bad |= v1 != (u1 ^ b2);
    if (q2 == 0) bad |= v2 != b2;
  }
  return bad ? Flag::fail_test : Flag::ok;
}

DecodedValues decoded_for(int t1, int t2, int b1, int b2, int u1, int u2) {
  DecodedValues dv;
  if (t1 == 0) dv.bhat1 = b1; else dv.uhat1 = u1;
  if (t2 == 0) dv.bhat2 = b2; else dv.uhat2 = u2;
  return dv;
}

// Honest-looking commitment: evaluates each key at a random point.
struct Committed {
  std::array<Image, 2> y;
  std::array<int, 2> b{};
  std::array<Preimage, 2> x;
};

Committed commit_random(const TranscriptRecord& rec, Rng& rng) {
  Committed c;
  const auto w = static_cast<std::size_t>(rec.params.preimage_bits);
  for (int i = 0; i < 2; ++i) {
    c.b[i] = rng.bit();
    c.x[i] = Preimage::random(w, rng);
    c.y[i] = eval_sample(rec.keys[i], c.b[i], c.x[i], rng);
  }
  return c;
}

}  // namespace

TEST_CASE("hadamard rule matches the check table exhaustively", "[protocol]") {
  int cases = 0;
  for (int th = 0; th < 4; ++th)
    for (int q = 0; q < 4; ++q)
      for (int vals = 0; vals < 64; ++vals) {
        const int t1 = th / 2, t2 = th % 2, q1 = q / 2, q2 = q % 2;
        const int b1 = vals & 1, b2 = (vals >> 1) & 1, u1 = (vals >> 2) & 1, u2 = (vals >> 3) & 1;
        const int v1 = (vals >> 4) & 1, v2 = (vals >> 5) & 1;
        const auto dv = decoded_for(t1, t2, b1, b2, u1, u2);
        CHECK(hadamard_rule({t1, t2}, dv, q1, q2, v1, v2) == table_flag(t1, t2, q1, q2, b1, b2, u1, u2, v1, v2));
        ++cases;
      }
  CHECK(cases == 1024);
}

TEST_CASE("answering the targets always passes", "[protocol]") {
  for (int th = 0; th < 4; ++th)
    for (int vals = 0; vals < 16; ++vals) {
      const BasisChoice basis{th / 2, th % 2};
      const auto dv = decoded_for(basis.theta1, basis.theta2, vals & 1, (vals >> 1) & 1, (vals >> 2) & 1, vals >> 3);
      const auto t = targets_from(basis, dv);
      for (int q = 0; q < 4; ++q) {
        // In the Bell case the targets are (s1, s2); an answer pair with v1 ^ v2 = s works.
        int v1 = *t.t1, v2 = *t.t2;
        if (basis.is_bell_case()) {
          v1 = 0;
          v2 = q == 1 ? *t.t1 : *t.t2;
        }
        const auto f = hadamard_rule(basis, dv, q / 2, q % 2, v1, v2);
        CHECK_FALSE(is_failure(f));
      }
    }
}

TEST_CASE("an undecodable checked value fails", "[protocol]") {
  DecodedValues dv;  // nothing decoded
  CHECK(hadamard_rule({0, 1}, dv, 0, 0, 0, 0) == Flag::fail_test);
  CHECK(hadamard_rule({1, 0}, dv, 0, 0, 0, 0) == Flag::fail_test);
  CHECK(hadamard_rule({1, 1}, dv, 0, 1, 0, 0) == Flag::fail_bell);
  // Unchecked question pairs pass regardless.
  CHECK(hadamard_rule({0, 1}, dv, 1, 0, 0, 0) == Flag::ok);
  CHECK(hadamard_rule({1, 1}, dv, 1, 1, 0, 0) == Flag::ok);
}

TEST_CASE("verifier preimage round", "[protocol]") {
  Rng rng(3), prng(4);
  const int hadamard_seen = [&] {
    int n = 0;
    for (std::uint64_t sid = 0; sid < 40; ++sid) {
      Verifier v(EntcfParams::ideal(), sid, Rng(sid + 100));
      v.start();
      const auto c = commit_random(v.record(), prng);
      if (v.on_commitment(c.y[0], c.y[1]) == RoundType::hadamard) {
        ++n;
        continue;
      }
      CHECK(v.phase() == VerifierPhase::awaiting_preimage);
      PreimageAnswer good{c.b[0], c.x[0], c.b[1], c.x[1]};
      CHECK(v.check_preimage(good) == Flag::ok);
      CHECK(v.phase() == VerifierPhase::done);
      CHECK(recheck(v.record()) == Flag::ok);
    }
    return n;
  }();
  CHECK(hadamard_seen > 5);
  CHECK(hadamard_seen < 35);

  // A wrong preimage fails.
  for (std::uint64_t sid = 0;; ++sid) {
    Verifier v(EntcfParams::ideal(), sid, Rng(sid + 100));
    v.start();
    const auto c = commit_random(v.record(), rng);
    if (v.on_commitment(c.y[0], c.y[1]) != RoundType::preimage) continue;
    auto bad = c.x[1];
    bad.flip(3);
    CHECK(v.check_preimage({c.b[0], c.x[0], c.b[1], bad}) == Flag::fail_pre);
    break;
  }
}

TEST_CASE("verifier rejects out-of-order calls", "[protocol]") {
  Verifier v(EntcfParams::ideal(), 0, Rng(1));
  CHECK_THROWS_AS(v.check_hadamard(0, 0), ProtocolStateError);
  v.start();
  CHECK_THROWS_AS(v.start(), ProtocolStateError);
  CHECK_THROWS_AS(v.on_equations(BitString(32), BitString(32)), ProtocolStateError);
}

TEST_CASE("verifier hadamard round decodes and records targets", "[protocol]") {
  Rng rng(12);
  int done = 0;
  for (std::uint64_t sid = 0; done < 30 && sid < 500; ++sid) {
    Verifier v(EntcfParams::ideal(), sid, Rng(sid * 7 + 1));
    v.start();
    const auto c = commit_random(v.record(), rng);
    if (v.on_commitment(c.y[0], c.y[1]) != RoundType::hadamard) continue;
    CHECK_THROWS_AS(v.on_equations(BitString(5), BitString(32)), MalformedMessageError);
    const auto d1 = BitString::random(32, rng), d2 = BitString::random(32, rng);
    const auto q = v.on_equations(d1, d2);
    const auto f = v.check_hadamard(rng.bit(), rng.bit());
    const auto& rec = v.record();
    CHECK(rec.flag == f);
    CHECK(recheck(rec) == f);
    // G legs decode to the committed bit.
    for (int i = 0; i < 2; ++i) {
      const auto& bhat = i == 0 ? rec.decoded.bhat1 : rec.decoded.bhat2;
      if (rec.keys[i].family == Family::G) {
        REQUIRE(bhat);
        CHECK(*bhat == c.b[i]);
      } else {
        CHECK_FALSE(bhat);
      }
    }
    const auto t = session_targets(rec);
    const auto t2 = targets_from(rec.basis, rec.decoded);
    CHECK(t.t1 == t2.t1);
    CHECK(t.t2 == t2.t2);
    (void)q;
    ++done;
  }
  CHECK(done == 30);
}

TEST_CASE("session wire handling", "[protocol]") {
  SECTION("answers before questions give a protocol error verdict") {
    VerifierSession vs(EntcfParams::ideal(), 5, Rng(5));
    vs.open();
    const auto reply = vs.handle(wire::answers(5, 0, 1));
    CHECK(reply["type"] == "verdict");
    CHECK(reply["flag"] == "protocol_error");
    CHECK(vs.done());
    CHECK(vs.record().error);
    CHECK_FALSE(vs.record().flag);
  }
  SECTION("malformed commit") {
    VerifierSession vs(EntcfParams::ideal(), 6, Rng(6));
    vs.open();
    const auto reply = vs.handle(nlohmann::json{{"type", "commit"}, {"y", {"zz", 1}}});
    CHECK(reply["flag"] == "protocol_error");
  }
  SECTION("message without a type") {
    VerifierSession vs(EntcfParams::ideal(), 7, Rng(7));
    vs.open();
    CHECK(vs.handle(nlohmann::json::array())["flag"] == "protocol_error");
  }
  SECTION("non-bit answers") {
    CHECK_THROWS_AS(wire::bit_field(nlohmann::json(2)), MalformedMessageError);
    CHECK_THROWS_AS(wire::bit_field(nlohmann::json("1")), MalformedMessageError);
  }
  SECTION("prover abort") {
    VerifierSession vs(EntcfParams::ideal(), 8, Rng(8));
    vs.open();
    const auto reply = vs.handle(wire::abort(8, "budget"));
    CHECK(reply["flag"] == "aborted");
    CHECK(vs.done());
  }
}

TEST_CASE("transcript JSON roundtrip preserves the record", "[protocol]") {
  Rng rng(19);
  for (auto params : {EntcfParams::ideal(), EntcfParams::lwe()})
    for (std::uint64_t sid = 0; sid < 6; ++sid) {
      Verifier v(params, sid, Rng(sid + 50));
      v.start();
      const auto c = commit_random(v.record(), rng);
      const auto w = static_cast<std::size_t>(params.preimage_bits);
      if (v.on_commitment(c.y[0], c.y[1]) == RoundType::preimage) {
        v.check_preimage({c.b[0], c.x[0], c.b[1], c.x[1]});
      } else {
        v.on_equations(BitString::random(w, rng), BitString::random(w, rng));
        v.check_hadamard(1, 0);
      }
      const auto j = transcript_to_json(v.record());
      const auto back = transcript_from_json(nlohmann::json::parse(j.dump()));
      CHECK(transcript_to_json(back) == j);
      CHECK(recheck(back) == v.record().flag);
    }
  CHECK_THROWS_AS(transcript_from_json(nlohmann::json::object()), MalformedMessageError);
}

TEST_CASE("flag names roundtrip", "[protocol]") {
  for (auto f : {Flag::ok, Flag::fail_pre, Flag::fail_test, Flag::fail_bell, Flag::none})
    CHECK(flag_from_string(to_string(f)) == f);
  CHECK_THROWS_AS(flag_from_string("bogus"), MalformedMessageError);
}
