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

// Verifier state machine and wire schema for one self-testing session.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>

#include "qselftest/bits.hpp"
#include "qselftest/entcf.hpp"
#include "qselftest/errors.hpp"
#include "qselftest/rng.hpp"

namespace qst {

using nlohmann::json;

struct BasisChoice {
  int theta1 = 0;
  int theta2 = 0;

  int index() const { return theta1 * 2 + theta2; }
  bool is_test_case() const { return theta1 != theta2; }
  bool is_bell_case() const { return theta1 == 1 && theta2 == 1; }
  friend bool operator==(const BasisChoice&, const BasisChoice&) = default;
};

enum class RoundType { preimage, hadamard };

enum class Flag { ok, fail_pre, fail_test, fail_bell, none };

inline const char* to_string(RoundType r) { return r == RoundType::preimage ? "preimage" : "hadamard"; }

inline RoundType round_from_string(const std::string& s) {
  if (s == "preimage") return RoundType::preimage;
  if (s == "hadamard") return RoundType::hadamard;
  throw MalformedMessageError("unknown round type '" + s + "'");
}

inline const char* to_string(Flag f) {
  switch (f) {
    case Flag::ok: return "ok";
    case Flag::fail_pre: return "fail_pre";
    case Flag::fail_test: return "fail_test";
    case Flag::fail_bell: return "fail_bell";
    case Flag::none: return "none";
  }
  return "none";
}

inline Flag flag_from_string(const std::string& s) {
  if (s == "ok") return Flag::ok;
  if (s == "fail_pre") return Flag::fail_pre;
  if (s == "fail_test") return Flag::fail_test;
  if (s == "fail_bell") return Flag::fail_bell;
  if (s == "none") return Flag::none;
  throw MalformedMessageError("unknown flag '" + s + "'");
}

inline bool is_failure(Flag f) { return f == Flag::fail_pre || f == Flag::fail_test || f == Flag::fail_bell; }

struct PreimageAnswer {
  int b1 = 0;
  Preimage x1;
  int b2 = 0;
  Preimage x2;
};

/// Trapdoor-decoded quantities used by the check table. Empty when undecodable
/// (or not applicable to the leg's family).
struct DecodedValues {
  std::optional<int> bhat1, bhat2;  // G legs
  std::optional<int> uhat1, uhat2;  // F legs
  bool degenerate1 = false, degenerate2 = false;
};

/// Accepted answer bits of a Hadamard round: (v1, v2) for (0,0) and the test
/// cases, (s1, s2) = (û2, û1) for the Bell case.
struct SessionTargets {
  BasisChoice basis;
  std::optional<int> t1, t2;
};

struct TranscriptRecord {
  std::uint64_t session_id = 0;
  EntcfParams params;
  BasisChoice basis;
  std::array<PublicKey, 2> keys;
  std::array<Trapdoor, 2> trapdoors;
  std::optional<std::array<Image, 2>> images;
  std::optional<RoundType> round;
  std::optional<PreimageAnswer> preimage;
  std::optional<std::array<BitString, 2>> equations;
  std::optional<std::array<int, 2>> questions;
  std::optional<std::array<int, 2>> answers;
  DecodedValues decoded;
  std::optional<Flag> flag;
  std::optional<std::string> error;
};

// ---------------------------------------------------------------------------
// Check rules as pure functions of stored data

inline Flag preimage_rule(const std::array<PublicKey, 2>& keys, const std::array<Image, 2>& y,
                          const PreimageAnswer& a) {
  const bool ok1 = chk(keys[0], y[0], a.b1, a.x1);
  const bool ok2 = chk(keys[1], y[1], a.b2, a.x2);
  return (ok1 && ok2) ? Flag::ok : Flag::fail_pre;
}

inline DecodedValues decode_session(const std::array<PublicKey, 2>& keys, const std::array<Trapdoor, 2>& tds,
                                    const std::array<Image, 2>& y, const std::array<BitString, 2>& d) {
  DecodedValues out;
  for (int i = 0; i < 2; ++i) {
    auto& bhat = i == 0 ? out.bhat1 : out.bhat2;
    auto& uhat = i == 0 ? out.uhat1 : out.uhat2;
    auto& degen = i == 0 ? out.degenerate1 : out.degenerate2;
    if (keys[i].family == Family::G) {
      try {
        bhat = decode_bit(tds[i], keys[i], y[i]);
      } catch (const InvalidImageError&) {
      }
    } else {
      if (const auto eq = decode_equation(tds[i], keys[i], y[i], d[i])) {
        uhat = eq->value;
        degen = eq->degenerate;
      }
    }
  }
  return out;
}

namespace detail {
// A required decoded value that is missing counts as a mismatch.
inline bool differs(const std::optional<int>& expected, int got) { return !expected || *expected != got; }
inline std::optional<int> xor_opt(const std::optional<int>& a, const std::optional<int>& b) {
  if (!a || !b) return std::nullopt;
  return *a ^ *b;
}
}  // namespace detail

inline Flag hadamard_rule(const BasisChoice& basis, const DecodedValues& dv, int q1, int q2, int v1, int v2) {
  using detail::differs;
  using detail::xor_opt;
  switch (basis.index()) {
    case 0:
      return Flag::none;
    case 1: {
      const bool bad = (q1 == 0 && differs(dv.bhat1, v1)) || (q2 == 1 && differs(xor_opt(dv.uhat2, dv.bhat1), v2));
      return bad ? Flag::fail_test : Flag::ok;
    }
    case 2: {
      const bool bad = (q1 == 1 && differs(xor_opt(dv.uhat1, dv.bhat2), v1)) || (q2 == 0 && differs(dv.bhat2, v2));
      return bad ? Flag::fail_test : Flag::ok;
    }
    default: {
      const bool bad = (q1 == 0 && q2 == 1 && differs(dv.uhat2, v1 ^ v2)) ||
                       (q1 == 1 && q2 == 0 && differs(dv.uhat1, v1 ^ v2));
      return bad ? Flag::fail_bell : Flag::ok;
    }
  }
}

inline SessionTargets targets_from(const BasisChoice& basis, const DecodedValues& dv) {
  SessionTargets t{basis, std::nullopt, std::nullopt};
  switch (basis.index()) {
    case 0:
      t.t1 = dv.bhat1;
      t.t2 = dv.bhat2;
      break;
    case 1:
      t.t1 = dv.bhat1;
      t.t2 = detail::xor_opt(dv.uhat2, dv.bhat1);
      break;
    case 2:
      t.t1 = detail::xor_opt(dv.uhat1, dv.bhat2);
      t.t2 = dv.bhat2;
      break;
    default:
      t.t1 = dv.uhat2;
      t.t2 = dv.uhat1;
      break;
  }
  return t;
}

/// Targets of a completed Hadamard round, recomputed from the stored keys.
inline SessionTargets session_targets(const TranscriptRecord& rec) {
  if (rec.round != RoundType::hadamard || !rec.images || !rec.equations)
    throw ProtocolStateError("session targets are only defined for Hadamard rounds with recorded equations");
  return targets_from(rec.basis, decode_session(rec.keys, rec.trapdoors, *rec.images, *rec.equations));
}

/// Replays the check rules on a stored record. Empty if the session never reached a verdict.
inline std::optional<Flag> recheck(const TranscriptRecord& rec) {
  if (!rec.images || !rec.round) return std::nullopt;
  if (*rec.round == RoundType::preimage) {
    if (!rec.preimage) return std::nullopt;
    return preimage_rule(rec.keys, *rec.images, *rec.preimage);
  }
  if (!rec.equations || !rec.questions || !rec.answers) return std::nullopt;
  const auto dv = decode_session(rec.keys, rec.trapdoors, *rec.images, *rec.equations);
  return hadamard_rule(rec.basis, dv, (*rec.questions)[0], (*rec.questions)[1], (*rec.answers)[0], (*rec.answers)[1]);
}

// ---------------------------------------------------------------------------
// Verifier

enum class VerifierPhase { created, awaiting_commitment, awaiting_preimage, awaiting_equations, awaiting_answers, done };

inline const char* to_string(VerifierPhase p) {
  switch (p) {
    case VerifierPhase::created: return "created";
    case VerifierPhase::awaiting_commitment: return "awaiting_commitment";
    case VerifierPhase::awaiting_preimage: return "awaiting_preimage";
    case VerifierPhase::awaiting_equations: return "awaiting_equations";
    case VerifierPhase::awaiting_answers: return "awaiting_answers";
    case VerifierPhase::done: return "done";
  }
  return "?";
}

class Verifier {
 public:
  Verifier(EntcfParams params, std::uint64_t session_id, Rng rng) : rng_(std::move(rng)) {
    rec_.session_id = session_id;
    rec_.params = std::move(params);
  }

  VerifierPhase phase() const { return phase_; }
  const TranscriptRecord& record() const { return rec_; }

  // Samples bases and keys; returns the public keys.
  std::array<PublicKey, 2> start() {
    expect(VerifierPhase::created, "start");
    rec_.params.validate();
    rec_.basis.theta1 = rng_.bit();
    rec_.basis.theta2 = rng_.bit();
    for (int i = 0; i < 2; ++i) {
      const int theta = i == 0 ? rec_.basis.theta1 : rec_.basis.theta2;
      auto kp = gen(theta == 0 ? Family::G : Family::F, rec_.params, rng_);
      rec_.keys[i] = std::move(kp.pk);
      rec_.trapdoors[i] = std::move(kp.td);
    }
    phase_ = VerifierPhase::awaiting_commitment;
    return rec_.keys;
  }

  RoundType on_commitment(Image y1, Image y2) {
    expect(VerifierPhase::awaiting_commitment, "commit");
    rec_.images = std::array<Image, 2>{std::move(y1), std::move(y2)};
    rec_.round = rng_.bit() ? RoundType::hadamard : RoundType::preimage;
    phase_ = *rec_.round == RoundType::preimage ? VerifierPhase::awaiting_preimage : VerifierPhase::awaiting_equations;
    return *rec_.round;
  }

  Flag check_preimage(PreimageAnswer a) {
    expect(VerifierPhase::awaiting_preimage, "preimage");
    rec_.preimage = std::move(a);
    return finish(preimage_rule(rec_.keys, *rec_.images, *rec_.preimage));
  }

  std::array<int, 2> on_equations(BitString d1, BitString d2) {
    expect(VerifierPhase::awaiting_equations, "equations");
    const auto w = static_cast<std::size_t>(rec_.params.preimage_bits);
    if (d1.size() != w || d2.size() != w) throw MalformedMessageError("equation strings must have length w");
    rec_.equations = std::array<BitString, 2>{std::move(d1), std::move(d2)};
    rec_.questions = std::array<int, 2>{rng_.bit(), rng_.bit()};
    phase_ = VerifierPhase::awaiting_answers;
    return *rec_.questions;
  }

  Flag check_hadamard(int v1, int v2) {
    expect(VerifierPhase::awaiting_answers, "answers");
    if ((v1 & ~1) || (v2 & ~1)) throw MalformedMessageError("answers must be bits");
    rec_.answers = std::array<int, 2>{v1, v2};
    rec_.decoded = decode_session(rec_.keys, rec_.trapdoors, *rec_.images, *rec_.equations);
    return finish(hadamard_rule(rec_.basis, rec_.decoded, (*rec_.questions)[0], (*rec_.questions)[1], v1, v2));
  }

  // Marks the session as ended without a verdict.
  void abort(std::string reason) {
    rec_.error = std::move(reason);
    phase_ = VerifierPhase::done;
  }

 private:
  void expect(VerifierPhase want, const char* what) const {
    if (phase_ != want)
      throw ProtocolStateError(std::string("unexpected '") + what + "' message in phase " + to_string(phase_));
  }

  Flag finish(Flag f) {
    rec_.flag = f;
    phase_ = VerifierPhase::done;
    return f;
  }

  Rng rng_;
  TranscriptRecord rec_;
  VerifierPhase phase_ = VerifierPhase::created;
};

// ---------------------------------------------------------------------------
// Wire messages: one JSON object per line.

namespace wire {

inline json keys(std::uint64_t sid, const EntcfParams& p, const std::array<PublicKey, 2>& k) {
  return {{"type", "keys"},
          {"session_id", sid},
          {"params", params_to_json(p)},
          {"keys", json::array({public_key_to_json(k[0]), public_key_to_json(k[1])})}};
}

inline json commit(std::uint64_t sid, const EntcfParams& p, const Image& y1, const Image& y2) {
  return {{"type", "commit"}, {"session_id", sid}, {"y", json::array({image_to_hex(y1, p), image_to_hex(y2, p)})}};
}

inline json round(std::uint64_t sid, RoundType r) {
  return {{"type", "round"}, {"session_id", sid}, {"round", to_string(r)}};
}

inline json preimage(std::uint64_t sid, const PreimageAnswer& a) {
  return {{"type", "preimage"},
          {"session_id", sid},
          {"b", json::array({a.b1, a.b2})},
          {"x", json::array({a.x1.to_hex(), a.x2.to_hex()})}};
}

inline json equations(std::uint64_t sid, const BitString& d1, const BitString& d2) {
  return {{"type", "equations"}, {"session_id", sid}, {"d", json::array({d1.to_hex(), d2.to_hex()})}};
}

inline json questions(std::uint64_t sid, const std::array<int, 2>& q) {
  return {{"type", "questions"}, {"session_id", sid}, {"q", json::array({q[0], q[1]})}};
}

inline json answers(std::uint64_t sid, int v1, int v2) {
  return {{"type", "answers"}, {"session_id", sid}, {"v", json::array({v1, v2})}};
}

inline json abort(std::uint64_t sid, const std::string& reason) {
  return {{"type", "abort"}, {"session_id", sid}, {"reason", reason}};
}

// flag_text is a Flag name, "protocol_error" or "aborted".
inline json verdict(std::uint64_t sid, const std::string& flag_text, const std::string& error = {}) {
  json j = {{"type", "verdict"}, {"session_id", sid}, {"flag", flag_text}};
  if (!error.empty()) j["error"] = error;
  return j;
}

inline std::string type_of(const json& msg) {
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    throw MalformedMessageError("message lacks a string 'type' field");
  return msg["type"].get<std::string>();
}

inline int bit_field(const json& v) {
  if (!v.is_number_integer()) throw MalformedMessageError("expected an integer bit");
  const auto b = v.get<std::int64_t>();
  if (b != 0 && b != 1) throw MalformedMessageError("expected a bit, got " + std::to_string(b));
  return static_cast<int>(b);
}

inline const json& pair_field(const json& msg, const char* key) {
  if (!msg.contains(key) || !msg[key].is_array() || msg[key].size() != 2)
    throw MalformedMessageError(std::string("field '") + key + "' must be a 2-element array");
  return msg[key];
}

inline std::string hex_field(const json& v) {
  if (!v.is_string()) throw MalformedMessageError("expected a hex string");
  return v.get<std::string>();
}

}  // namespace wire

/// Wraps a Verifier behind the wire schema. handle() returns the reply.
/// Malformed or out-of-order messages end the session with a protocol_error verdict.
class VerifierSession {
 public:
  VerifierSession(EntcfParams params, std::uint64_t session_id, Rng rng)
      : sid_(session_id), verifier_(std::move(params), session_id, std::move(rng)) {}

  json open() {
    const auto keys = verifier_.start();
    return wire::keys(sid_, verifier_.record().params, keys);
  }

  json handle(const json& msg) {
    try {
      return dispatch(msg);
    } catch (const MalformedMessageError& e) {
      return fail(e.what());
    } catch (const ProtocolStateError& e) {
      return fail(e.what());
    } catch (const StructuralError& e) {
      return fail(e.what());
    }
  }

  // Records a transport-level failure (timeout, disconnect).
  void abort(const std::string& reason) {
    if (!done()) verifier_.abort(reason);
  }

  bool done() const { return verifier_.phase() == VerifierPhase::done; }
  const TranscriptRecord& record() const { return verifier_.record(); }

 private:
  json dispatch(const json& msg) {
    const std::string type = wire::type_of(msg);
    const auto& p = verifier_.record().params;
    if (type == "commit") {
      const auto& y = wire::pair_field(msg, "y");
      auto y1 = image_from_hex(wire::hex_field(y[0]), p);
      auto y2 = image_from_hex(wire::hex_field(y[1]), p);
      return wire::round(sid_, verifier_.on_commitment(std::move(y1), std::move(y2)));
    }
    if (type == "preimage") {
      const auto& b = wire::pair_field(msg, "b");
      const auto& x = wire::pair_field(msg, "x");
      const auto w = static_cast<std::size_t>(p.preimage_bits);
      PreimageAnswer a{wire::bit_field(b[0]), BitString::from_hex(wire::hex_field(x[0]), w), wire::bit_field(b[1]),
                       BitString::from_hex(wire::hex_field(x[1]), w)};
      return wire::verdict(sid_, to_string(verifier_.check_preimage(std::move(a))));
    }
    if (type == "equations") {
      const auto& d = wire::pair_field(msg, "d");
      const auto w = static_cast<std::size_t>(p.preimage_bits);
      auto q = verifier_.on_equations(BitString::from_hex(wire::hex_field(d[0]), w),
                                      BitString::from_hex(wire::hex_field(d[1]), w));
      return wire::questions(sid_, q);
    }
    if (type == "answers") {
      const auto& v = wire::pair_field(msg, "v");
      return wire::verdict(sid_, to_string(verifier_.check_hadamard(wire::bit_field(v[0]), wire::bit_field(v[1]))));
    }
    if (type == "abort") {
      const std::string reason = msg.value("reason", std::string("unspecified"));
      verifier_.abort("prover aborted: " + reason);
      return wire::verdict(sid_, "aborted", reason);
    }
    throw MalformedMessageError("unexpected message type '" + type + "'");
  }

  json fail(const std::string& what) {
    verifier_.abort(what);
    return wire::verdict(sid_, "protocol_error", what);
  }

  std::uint64_t sid_;
  Verifier verifier_;
};

// ---------------------------------------------------------------------------
// Transcript serialization

inline json transcript_to_json(const TranscriptRecord& r) {
  const auto& p = r.params;
  json j;
  j["session_id"] = r.session_id;
  j["params"] = params_to_json(p);
  j["basis"] = {r.basis.theta1, r.basis.theta2};
  j["keys"] = {public_key_to_json(r.keys[0]), public_key_to_json(r.keys[1])};
  j["trapdoors"] = {trapdoor_to_json(r.trapdoors[0], p), trapdoor_to_json(r.trapdoors[1], p)};
  if (r.images) j["y"] = {image_to_hex((*r.images)[0], p), image_to_hex((*r.images)[1], p)};
  if (r.round) j["round"] = to_string(*r.round);
  if (r.preimage)
    j["preimage"] = {{"b", {r.preimage->b1, r.preimage->b2}}, {"x", {r.preimage->x1.to_hex(), r.preimage->x2.to_hex()}}};
  if (r.equations) j["d"] = {(*r.equations)[0].to_hex(), (*r.equations)[1].to_hex()};
  if (r.questions) j["q"] = {(*r.questions)[0], (*r.questions)[1]};
  if (r.answers) j["v"] = {(*r.answers)[0], (*r.answers)[1]};
  if (r.answers) {
    auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
    j["decoded"] = {{"bhat", {opt(r.decoded.bhat1), opt(r.decoded.bhat2)}},
                    {"uhat", {opt(r.decoded.uhat1), opt(r.decoded.uhat2)}},
                    {"degenerate", {r.decoded.degenerate1, r.decoded.degenerate2}}};
    const auto t = targets_from(r.basis, r.decoded);
    j["targets"] = {opt(t.t1), opt(t.t2)};
  }
  if (r.flag) j["flag"] = to_string(*r.flag);
  if (r.error) j["error"] = *r.error;
  return j;
}

inline TranscriptRecord transcript_from_json(const json& j) {
  try {
    TranscriptRecord r;
    r.session_id = j.at("session_id").get<std::uint64_t>();
    r.params = params_from_json(j.at("params"));
    r.basis = {j.at("basis").at(0).get<int>(), j.at("basis").at(1).get<int>()};
    for (int i = 0; i < 2; ++i) {
      r.keys[i] = public_key_from_json(j.at("keys").at(i));
      r.trapdoors[i] = trapdoor_from_json(j.at("trapdoors").at(i));
    }
    const auto& p = r.params;
    const auto w = static_cast<std::size_t>(p.preimage_bits);
    if (j.contains("y"))
      r.images = std::array<Image, 2>{image_from_hex(j["y"].at(0).get<std::string>(), p),
                                      image_from_hex(j["y"].at(1).get<std::string>(), p)};
    if (j.contains("round")) r.round = round_from_string(j["round"].get<std::string>());
    if (j.contains("preimage")) {
      const auto& pa = j["preimage"];
      r.preimage = PreimageAnswer{pa.at("b").at(0).get<int>(), BitString::from_hex(pa.at("x").at(0).get<std::string>(), w),
                                  pa.at("b").at(1).get<int>(), BitString::from_hex(pa.at("x").at(1).get<std::string>(), w)};
    }
    if (j.contains("d"))
      r.equations = std::array<BitString, 2>{BitString::from_hex(j["d"].at(0).get<std::string>(), w),
                                             BitString::from_hex(j["d"].at(1).get<std::string>(), w)};
    if (j.contains("q")) r.questions = std::array<int, 2>{j["q"].at(0).get<int>(), j["q"].at(1).get<int>()};
    if (j.contains("v")) r.answers = std::array<int, 2>{j["v"].at(0).get<int>(), j["v"].at(1).get<int>()};
    if (j.contains("decoded")) {
      const auto& dv = j["decoded"];
      auto opt = [](const json& v) { return v.is_null() ? std::optional<int>{} : std::optional<int>{v.get<int>()}; };
      r.decoded.bhat1 = opt(dv.at("bhat").at(0));
      r.decoded.bhat2 = opt(dv.at("bhat").at(1));
      r.decoded.uhat1 = opt(dv.at("uhat").at(0));
      r.decoded.uhat2 = opt(dv.at("uhat").at(1));
      r.decoded.degenerate1 = dv.at("degenerate").at(0).get<bool>();
      r.decoded.degenerate2 = dv.at("degenerate").at(1).get<bool>();
    }
    if (j.contains("flag")) r.flag = flag_from_string(j["flag"].get<std::string>());
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw MalformedMessageError(std::string("transcript record: ") + e.what());
  }
}

}  // namespace qst
