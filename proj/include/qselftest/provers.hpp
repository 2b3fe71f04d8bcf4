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

// Classically simulated prover strategies.
//
// The honest strategy tracks the two effective qubits a real prover would hold
// after measuring the image registers. Tracking the claw superposition needs
// the verifier's trapdoors; strategies receive them through a TrapdoorOracle,
// which is a simulation-only handle and never reaches the verifier.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>

#include "qselftest/bits.hpp"
#include "qselftest/entcf.hpp"
#include "qselftest/errors.hpp"
#include "qselftest/linalg.hpp"
#include "qselftest/protocol.hpp"
#include "qselftest/rng.hpp"

namespace qst {

using TrapdoorOracle = std::function<std::array<Trapdoor, 2>(std::uint64_t, const std::array<PublicKey, 2>&)>;

/// Regenerates the verifier's key material from the shared root seed.
inline TrapdoorOracle replay_oracle(std::uint64_t root_seed) {
  return [root_seed](std::uint64_t sid, const std::array<PublicKey, 2>& keys) {
    Verifier v(keys[0].params, sid, derive_stream(root_seed, sid, StreamRole::verifier));
    const auto regenerated = v.start();
    if (!(regenerated[0] == keys[0]) || !(regenerated[1] == keys[1]))
      throw AbortSessionError("replay oracle: keys do not match the shared seed");
    return v.record().trapdoors;
  };
}

struct ProverContext {
  std::uint64_t session_id = 0;
  EntcfParams params;
  std::array<PublicKey, 2> keys;
  std::optional<std::array<Trapdoor, 2>> trapdoors;  // present only for strategies that need the oracle
};

class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string name() const = 0;
  virtual bool needs_oracle() const { return false; }

  virtual void prepare(const ProverContext& ctx, Rng& rng) = 0;
  // Internal preimage check run before committing.
  virtual bool self_check() const { return true; }
  virtual std::array<Image, 2> commit() const = 0;
  virtual PreimageAnswer preimage(Rng& rng) = 0;
  virtual std::array<BitString, 2> equations(Rng& rng) = 0;
  virtual std::array<int, 2> answers(int q1, int q2, Rng& rng) = 0;
};

using StrategyFactory = std::function<std::unique_ptr<Strategy>()>;

// Samples (a, b) from the product measurement in bases (q1, q2).
inline std::array<int, 2> born_sample(const ComplexMatrix& rho, int q1, int q2, Rng& rng) {
  const double r = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      acc += std::max(0.0, (product_projector(q1, q2, a, b) * rho).trace().real());
      if (r < acc) return {a, b};
    }
  return {1, 1};
}

/// Qubit of one leg after the equation measurement: |b̂⟩ for G, |(−)^u⟩ for F.
inline StateVector honest_leg_qubit(Family family, int value) {
  return basis_state(value, family == Family::G ? 0 : 1);
}

inline StateVector honest_post_cz_state(Family f1, int c1, Family f2, int c2, bool entangle = true) {
  const StateVector prod = tensor(honest_leg_qubit(f1, c1), honest_leg_qubit(f2, c2));
  return entangle ? StateVector(controlled_z() * prod) : prod;
}

struct HonestLeg {
  PublicKey pk;
  Image y;
  int b = 0;  // sampled bit; equals b̂ on G legs
  Preimage x;
  Preimage claw0, claw1;  // F legs only
  int phase = 0;          // d · (x0 ⊕ x1), F legs, after equations

  int qubit_value() const { return pk.family == Family::G ? b : phase; }
};

/// Honest prover. Optional depolarizing noise on the post-CZ state, or no CZ at all.
class HonestStrategy : public Strategy {
 public:
  explicit HonestStrategy(double depolarizing = 0.0, bool entangle = true) : p_(depolarizing), entangle_(entangle) {
    if (!(p_ >= 0.0 && p_ <= 1.0)) throw ConfigError("depolarizing probability must lie in [0, 1]");
  }

  std::string name() const override {
    if (!entangle_) return "no_entangler";
    if (p_ > 0.0) return "honest_depolarized:" + nlohmann::json(p_).dump();
    return "honest";
  }
  bool needs_oracle() const override { return true; }

  void prepare(const ProverContext& ctx, Rng& rng) override {
    if (!ctx.trapdoors) throw AbortSessionError("honest strategy requires the simulation oracle");
    for (int i = 0; i < 2; ++i) legs_[i] = sample_leg(ctx.keys[i], (*ctx.trapdoors)[i], rng);
  }

  bool self_check() const override {
    for (const auto& leg : legs_)
      if (!chk(leg.pk, leg.y, leg.b, leg.x)) return false;
    return true;
  }

  std::array<Image, 2> commit() const override { return {legs_[0].y, legs_[1].y}; }

  PreimageAnswer preimage(Rng& rng) override {
    std::array<int, 2> b{};
    std::array<Preimage, 2> x;
    for (int i = 0; i < 2; ++i) {
      const auto& leg = legs_[i];
      if (leg.pk.family == Family::G) {
        b[i] = leg.b;
        x[i] = leg.x;
      } else {
        b[i] = rng.bit();
        x[i] = b[i] ? leg.claw1 : leg.claw0;
      }
    }
    return {b[0], x[0], b[1], x[1]};
  }

  std::array<BitString, 2> equations(Rng& rng) override {
    std::array<BitString, 2> d;
    for (int i = 0; i < 2; ++i) {
      auto& leg = legs_[i];
      d[i] = BitString::random(leg.x.size(), rng);
      if (leg.pk.family == Family::F) leg.phase = dot(d[i], leg.claw0 ^ leg.claw1);
    }
    rho_ = (1.0 - p_) * outer(post_cz_state()) + p_ * identity(4) / 4.0;
    return d;
  }

  std::array<int, 2> answers(int q1, int q2, Rng& rng) override { return born_sample(rho_, q1, q2, rng); }

  StateVector post_cz_state() const {
    return honest_post_cz_state(legs_[0].pk.family, legs_[0].qubit_value(), legs_[1].pk.family,
                                legs_[1].qubit_value(), entangle_);
  }
  const std::array<HonestLeg, 2>& legs() const { return legs_; }
  const ComplexMatrix& joint_state() const { return rho_; }

 protected:
  static HonestLeg sample_leg(const PublicKey& pk, const Trapdoor& td, Rng& rng) {
    constexpr int kMaxResample = 16;
    for (int attempt = 0; attempt < kMaxResample; ++attempt) {
      HonestLeg leg;
      leg.pk = pk;
      leg.b = rng.bit();
      leg.x = BitString::random(static_cast<std::size_t>(pk.params.preimage_bits), rng);
      leg.y = eval_sample(pk, leg.b, leg.x, rng);
      if (pk.family == Family::F) {
        auto x0 = invert(td, pk, 0, leg.y);
        auto x1 = invert(td, pk, 1, leg.y);
        if (!x0 || !x1) continue;
        leg.claw0 = std::move(*x0);
        leg.claw1 = std::move(*x1);
      }
      return leg;
    }
    throw AbortSessionError("claw oracle failed to invert a sampled image");
  }

  double p_;
  bool entangle_;
  std::array<HonestLeg, 2> legs_;
  ComplexMatrix rho_ = identity(4) / 4.0;
};

/// Classical baseline: commits to one sampled (b, x) per leg, answers
/// computational-basis questions with its sampled b and Hadamard-basis
/// questions with a fresh uniform bit.
class ClassicalGuessStrategy : public Strategy {
 public:
  std::string name() const override { return "classical_guess"; }

  void prepare(const ProverContext& ctx, Rng& rng) override {
    for (int i = 0; i < 2; ++i) {
      const auto& pk = ctx.keys[i];
      b_[i] = rng.bit();
      x_[i] = BitString::random(static_cast<std::size_t>(pk.params.preimage_bits), rng);
      y_[i] = eval_sample(pk, b_[i], x_[i], rng);
    }
  }

  std::array<Image, 2> commit() const override { return y_; }
  PreimageAnswer preimage(Rng&) override { return {b_[0], x_[0], b_[1], x_[1]}; }

  std::array<BitString, 2> equations(Rng& rng) override {
    return {BitString::random(x_[0].size(), rng), BitString::random(x_[1].size(), rng)};
  }

  std::array<int, 2> answers(int q1, int q2, Rng& rng) override {
    const int v1 = q1 == 0 ? b_[0] : rng.bit();
    const int v2 = q2 == 0 ? b_[1] : rng.bit();
    return {v1, v2};
  }

 private:
  std::array<int, 2> b_{};
  std::array<Preimage, 2> x_;
  std::array<Image, 2> y_;
};

/// Honest prover whose state preparation corrupts the leg-1 preimage with
/// probability `corruption`. Used to exercise the perfected wrapper.
class FaultyStrategy : public HonestStrategy {
 public:
  explicit FaultyStrategy(double corruption) : corruption_(corruption) {
    if (!(corruption_ >= 0.0 && corruption_ <= 1.0)) throw ConfigError("corruption probability must lie in [0, 1]");
  }

  std::string name() const override { return "faulty:" + nlohmann::json(corruption_).dump(); }

  void prepare(const ProverContext& ctx, Rng& rng) override {
    HonestStrategy::prepare(ctx, rng);
    if (rng.bernoulli(corruption_)) {
      auto& leg = legs_[0];
      leg.x.flip(0);
      if (leg.pk.family == Family::F) {
        leg.claw0.flip(0);
        leg.claw1.flip(0);
      }
    }
  }

 private:
  double corruption_;
};

/// Retries state preparation until the wrapped strategy's self-check passes.
class PerfectedStrategy : public Strategy {
 public:
  static constexpr int kDefaultBudget = 64;

  explicit PerfectedStrategy(std::unique_ptr<Strategy> inner, int budget = kDefaultBudget)
      : inner_(std::move(inner)), budget_(budget) {
    if (budget_ < 1) throw ConfigError("retry budget must be positive");
  }

  std::string name() const override { return "perfected:" + inner_->name(); }
  bool needs_oracle() const override { return inner_->needs_oracle(); }

  void prepare(const ProverContext& ctx, Rng& rng) override {
    for (attempts_ = 1; attempts_ <= budget_; ++attempts_) {
      inner_->prepare(ctx, rng);
      if (inner_->self_check()) return;
    }
    attempts_ = budget_;
    throw AbortSessionError("self-check failed " + std::to_string(budget_) + " times");
  }

  bool self_check() const override { return inner_->self_check(); }
  std::array<Image, 2> commit() const override { return inner_->commit(); }
  PreimageAnswer preimage(Rng& rng) override { return inner_->preimage(rng); }
  std::array<BitString, 2> equations(Rng& rng) override { return inner_->equations(rng); }
  std::array<int, 2> answers(int q1, int q2, Rng& rng) override { return inner_->answers(q1, q2, rng); }

  // Preparations in the last session, and retries beyond the first.
  int attempts() const { return attempts_; }
  int retries() const { return attempts_ - 1; }
  const Strategy& inner() const { return *inner_; }

 private:
  std::unique_ptr<Strategy> inner_;
  int budget_;
  int attempts_ = 0;
};

/// Parses "honest", "honest_depolarized:<p>", "no_entangler", "classical_guess",
/// "faulty:<p>", each optionally prefixed by "perfected:".
inline StrategyFactory parse_strategy(const std::string& text) {
  constexpr std::string_view kPerfected = "perfected:";
  if (text.rfind(kPerfected, 0) == 0) {
    auto inner = parse_strategy(text.substr(kPerfected.size()));
    return [inner] { return std::make_unique<PerfectedStrategy>(inner()); };
  }
  auto number_after = [&](std::string_view prefix) {
    const std::string tail = text.substr(prefix.size());
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(tail, &used);
    } catch (const std::exception&) {
      throw ConfigError("strategy '" + text + "': expected a number after ':'");
    }
    if (used != tail.size()) throw ConfigError("strategy '" + text + "': trailing characters");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("strategy '" + text + "': probability outside [0, 1]");
    return p;
  };
  if (text == "honest") return [] { return std::make_unique<HonestStrategy>(); };
  if (text == "no_entangler") return [] { return std::make_unique<HonestStrategy>(0.0, false); };
  if (text == "classical_guess") return [] { return std::make_unique<ClassicalGuessStrategy>(); };
  if (text.rfind("honest_depolarized:", 0) == 0) {
    const double p = number_after("honest_depolarized:");
    return [p] { return std::make_unique<HonestStrategy>(p); };
  }
  if (text.rfind("faulty:", 0) == 0) {
    const double p = number_after("faulty:");
    return [p] { return std::make_unique<FaultyStrategy>(p); };
  }
  throw ConfigError("unknown strategy '" + text + "'");
}

/// Drives a Strategy from wire messages. handle() returns the reply, or
/// nothing once the verdict has arrived.
class ProverSession {
 public:
  ProverSession(std::unique_ptr<Strategy> strategy, Rng rng, TrapdoorOracle oracle)
      : strategy_(std::move(strategy)), rng_(std::move(rng)), oracle_(std::move(oracle)) {}

  std::optional<json> handle(const json& msg) {
    const std::string type = wire::type_of(msg);
    if (type == "keys") return on_keys(msg);
    if (type == "round") {
      const auto r = round_from_string(msg.at("round").get<std::string>());
      if (r == RoundType::preimage) return wire::preimage(ctx_.session_id, strategy_->preimage(rng_));
      const auto d = strategy_->equations(rng_);
      return wire::equations(ctx_.session_id, d[0], d[1]);
    }
    if (type == "questions") {
      const auto& q = wire::pair_field(msg, "q");
      const auto v = strategy_->answers(wire::bit_field(q[0]), wire::bit_field(q[1]), rng_);
      return wire::answers(ctx_.session_id, v[0], v[1]);
    }
    if (type == "verdict") {
      verdict_ = msg.at("flag").get<std::string>();
      return std::nullopt;
    }
    throw MalformedMessageError("prover received unexpected message type '" + type + "'");
  }

  const std::optional<std::string>& verdict() const { return verdict_; }
  const Strategy& strategy() const { return *strategy_; }

 private:
  json on_keys(const json& msg) {
    try {
      ctx_.session_id = msg.at("session_id").get<std::uint64_t>();
      ctx_.params = params_from_json(msg.at("params"));
      for (int i = 0; i < 2; ++i) ctx_.keys[i] = public_key_from_json(msg.at("keys").at(i));
    } catch (const json::exception& e) {
      throw MalformedMessageError(std::string("keys message: ") + e.what());
    }
    try {
      if (strategy_->needs_oracle()) {
        if (!oracle_) throw AbortSessionError("strategy needs a simulation oracle");
        ctx_.trapdoors = oracle_(ctx_.session_id, ctx_.keys);
      }
      strategy_->prepare(ctx_, rng_);
    } catch (const AbortSessionError& e) {
      return wire::abort(ctx_.session_id, e.what());
    }
    const auto y = strategy_->commit();
    return wire::commit(ctx_.session_id, ctx_.params, y[0], y[1]);
  }

  std::unique_ptr<Strategy> strategy_;
  Rng rng_;
  TrapdoorOracle oracle_;
  ProverContext ctx_;
  std::optional<std::string> verdict_;
};

}  // namespace qst
