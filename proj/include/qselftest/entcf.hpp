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

// Extended noisy trapdoor claw-free function families.
//
// Two backends share one interface:
//   * ideal: a noise-free functional mock built from a keyed Feistel
//     permutation pi over {0,1}^{2w}. F pairs are f_b(x) = pi(x ^ b*delta),
//     G pairs are f_b(x) = pi(b || x). It has exact claw/injectivity
//     semantics and no computational hardness whatsoever; its public key
//     determines the claw.
//   * lwe: f_b(x) = A x + b u + e over Z_q^m, with A carrying a gadget
//     trapdoor so that the verifier can invert. F keys use u = A s + e, which
//     gives claws x_1 = x_0 - s; G keys use a uniform u. Toy sizes only.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qselftest/bits.hpp"
#include "qselftest/errors.hpp"
#include "qselftest/rng.hpp"

namespace qst {

enum class Family { F, G };
enum class Backend { ideal, lwe };

inline const char* to_string(Family f) { return f == Family::F ? "F" : "G"; }
inline const char* to_string(Backend b) { return b == Backend::ideal ? "ideal" : "lwe"; }

inline Family family_from_string(const std::string& s) {
  if (s == "F") return Family::F;
  if (s == "G") return Family::G;
  throw MalformedMessageError("unknown family '" + s + "'");
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "ideal") return Backend::ideal;
  if (s == "lwe") return Backend::lwe;
  throw ConfigError("unknown backend '" + s + "'");
}

struct EntcfParams {
  Backend backend = Backend::ideal;
  int security_bits = 32;
  int lwe_n = 4;
  std::uint64_t lwe_q = 1ULL << 16;
  int lwe_m = 96;
  std::int64_t bound_eval = 4;      // B_V
  std::int64_t bound_check = 2048;  // B_P
  double gaussian_width = 1.6;
  int preimage_bits = 32;  // w

  static EntcfParams ideal(int w = 32) {
    EntcfParams p;
    p.backend = Backend::ideal;
    p.preimage_bits = w;
    p.security_bits = w;
    return p;
  }

  static EntcfParams lwe() {
    EntcfParams p;
    p.backend = Backend::lwe;
    p.preimage_bits = p.lwe_n * p.log_q();
    return p;
  }

  int log_q() const { return std::bit_width(lwe_q) - 1; }
  int gadget_rows() const { return lwe_n * log_q(); }
  int trapdoor_rows() const { return lwe_m - gadget_rows(); }
  // Nonzero entries per column of the trapdoor matrix R.
  int trapdoor_weight() const { return std::min(2, std::max(0, trapdoor_rows())); }

  void validate() const {
    if (security_bits < 1) throw ConfigError("security_bits must be positive");
    if (backend == Backend::ideal) {
      if (preimage_bits < 8 || preimage_bits > 32)
        throw ConfigError("ideal backend needs 8 <= w <= 32, got w=" + std::to_string(preimage_bits));
      return;
    }
    if (lwe_n < 1) throw ConfigError("lwe_n must be positive");
    if (lwe_q < 16 || lwe_q > (1ULL << 30) || !std::has_single_bit(lwe_q))
      throw ConfigError("lwe_q must be a power of two in [2^4, 2^30]");
    if (lwe_m < gadget_rows())
      throw ConfigError("lwe_m must be at least lwe_n*log2(q) = " + std::to_string(gadget_rows()));
    const auto q = static_cast<std::int64_t>(lwe_q);
    if (!(0 < bound_eval && bound_eval < bound_check && bound_check < q / 8))
      throw ConfigError("need 0 < B_V < B_P < q/8");
    // Gadget decoding tolerates error below q/4; an image error of 2*B_P
    // grows by the trapdoor column weight.
    if ((trapdoor_weight() + 1) * 2 * bound_check >= q / 4)
      throw ConfigError("B_P too large for gadget decoding with this trapdoor weight");
    if (preimage_bits != gadget_rows()) throw ConfigError("lwe backend needs w = lwe_n * log2(q)");
    if (!(gaussian_width > 0.0)) throw ConfigError("gaussian_width must be positive");
  }

  friend bool operator==(const EntcfParams&, const EntcfParams&) = default;
};

struct IdealKey {
  std::uint64_t seed = 0;
  std::uint64_t shift = 0;  // delta for F keys, 0 for G keys
  friend bool operator==(const IdealKey&, const IdealKey&) = default;
};

struct LweKey {
  std::vector<std::uint64_t> a;  // m x n, row-major
  std::vector<std::uint64_t> u;  // length m
  friend bool operator==(const LweKey&, const LweKey&) = default;
};

struct PublicKey {
  Family family = Family::F;
  EntcfParams params;
  std::variant<IdealKey, LweKey> payload;
  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct IdealTrapdoor {
  std::uint64_t seed = 0;
  std::uint64_t shift = 0;
  friend bool operator==(const IdealTrapdoor&, const IdealTrapdoor&) = default;
};

struct LweTrapdoor {
  std::vector<int> r;              // trapdoor_rows x gadget_rows, entries in {-1, 0, 1}
  std::vector<std::uint64_t> s;    // F keys only
  std::vector<std::int64_t> e;     // F keys only
  friend bool operator==(const LweTrapdoor&, const LweTrapdoor&) = default;
};

struct Trapdoor {
  Family family = Family::F;
  std::variant<IdealTrapdoor, LweTrapdoor> payload;
  friend bool operator==(const Trapdoor&, const Trapdoor&) = default;
};

struct KeyPair {
  PublicKey pk;
  Trapdoor td;
};

/// Output of a function evaluation: a 2w-bit tag (ideal) or a Z_q^m vector.
class Image {
 public:
  Image() = default;
  static Image ideal(std::uint64_t tag) {
    Image y;
    y.value_ = tag;
    return y;
  }
  static Image lwe(std::vector<std::uint64_t> coords) {
    Image y;
    y.value_ = std::move(coords);
    return y;
  }

  bool is_ideal() const { return std::holds_alternative<std::uint64_t>(value_); }
  std::uint64_t tag() const { return std::get<std::uint64_t>(value_); }
  const std::vector<std::uint64_t>& coords() const { return std::get<std::vector<std::uint64_t>>(value_); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::variant<std::uint64_t, std::vector<std::uint64_t>> value_{std::uint64_t{0}};
};

using Preimage = BitString;

struct EquationBit {
  int value = 0;
  bool degenerate = false;  // d was the all-zero string
};

namespace detail {

inline std::uint64_t low_mask(int bits) { return bits >= 64 ? ~0ULL : ((1ULL << bits) - 1); }

// Keyed Feistel permutation over {0,1}^{2w}.
class FeistelPermutation {
 public:
  FeistelPermutation(std::uint64_t seed, int half_bits) : seed_(seed), half_(half_bits), mask_(low_mask(half_bits)) {}

  std::uint64_t forward(std::uint64_t v) const {
    std::uint64_t l = v & mask_, r = (v >> half_) & mask_;
    for (int k = 0; k < kRounds; ++k) {
      const std::uint64_t next = l ^ round(k, r);
      l = r;
      r = next;
    }
    return l | (r << half_);
  }

  std::uint64_t inverse(std::uint64_t v) const {
    std::uint64_t l = v & mask_, r = (v >> half_) & mask_;
    for (int k = kRounds - 1; k >= 0; --k) {
      const std::uint64_t prev = r ^ round(k, l);
      r = l;
      l = prev;
    }
    return l | (r << half_);
  }

 private:
  static constexpr int kRounds = 6;
  std::uint64_t round(int k, std::uint64_t half) const {
    return splitmix64(seed_ ^ splitmix64((static_cast<std::uint64_t>(k) << 40) ^ half)) & mask_;
  }
  std::uint64_t seed_;
  int half_;
  std::uint64_t mask_;
};

class LweArith {
 public:
  explicit LweArith(const EntcfParams& p)
      : n_(p.lwe_n), m_(p.lwe_m), k_(p.log_q()), q_(p.lwe_q), mask_(p.lwe_q - 1) {}

  std::uint64_t reduce(std::int64_t v) const { return static_cast<std::uint64_t>(v) & mask_; }
  std::int64_t centered(std::uint64_t v) const {
    v &= mask_;
    return v >= q_ / 2 ? static_cast<std::int64_t>(v) - static_cast<std::int64_t>(q_) : static_cast<std::int64_t>(v);
  }

  // J-decoding: little-endian base-2 digits per coordinate.
  std::vector<std::uint64_t> decode_preimage(const Preimage& x) const {
    if (static_cast<int>(x.size()) != n_ * k_) throw StructuralError("preimage length does not match w");
    std::vector<std::uint64_t> out(n_, 0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < k_; ++j) out[i] |= static_cast<std::uint64_t>(x[i * k_ + j]) << j;
    return out;
  }

  Preimage encode_preimage(const std::vector<std::uint64_t>& v) const {
    Preimage x(static_cast<std::size_t>(n_ * k_));
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < k_; ++j) x.set(i * k_ + j, static_cast<int>((v[i] >> j) & 1U));
    return x;
  }

  std::vector<std::uint64_t> apply(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& x) const {
    std::vector<std::uint64_t> y(m_, 0);
    for (int r = 0; r < m_; ++r) {
      std::uint64_t acc = 0;
      for (int c = 0; c < n_; ++c) acc += a[r * n_ + c] * x[c];
      y[r] = acc & mask_;
    }
    return y;
  }

  // ‖y − A x − b u‖_∞ with centered representatives.
  std::int64_t residual_norm(const LweKey& key, const std::vector<std::uint64_t>& y,
                             const std::vector<std::uint64_t>& x, int b) const {
    const auto ax = apply(key.a, x);
    std::int64_t worst = 0;
    for (int r = 0; r < m_; ++r) {
      const std::uint64_t expect = (ax[r] + (b ? key.u[r] : 0)) & mask_;
      worst = std::max(worst, std::abs(centered(y[r] - expect)));
    }
    return worst;
  }

  int n() const { return n_; }
  int m() const { return m_; }
  int k() const { return k_; }
  std::uint64_t q() const { return q_; }

 private:
  int n_, m_, k_;
  std::uint64_t q_, mask_;
};

// Truncated discrete Gaussian on [-bound, bound], rejection sampled.
inline std::int64_t sample_noise(Rng& rng, std::int64_t bound, double width) {
  for (;;) {
    const auto v = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * bound + 1))) - bound;
    const double accept = std::exp(-static_cast<double>(v * v) / (2.0 * width * width));
    if (rng.uniform() < accept) return v;
  }
}

// Recovers x from z = A x + err when the gadget-decoding error stays below q/4.
inline std::vector<std::uint64_t> gadget_decode(const EntcfParams& p, const LweTrapdoor& td,
                                                const std::vector<std::uint64_t>& z) {
  const LweArith ar(p);
  const int mbar = p.trapdoor_rows();
  const int rows = p.gadget_rows();
  const int k = ar.k();
  const std::uint64_t q = ar.q();
  std::vector<std::uint64_t> c(rows);
  for (int t = 0; t < rows; ++t) {
    std::int64_t acc = static_cast<std::int64_t>(z[mbar + t]);
    for (int r = 0; r < mbar; ++r) {
      const int coef = td.r[r * rows + t];
      if (coef) acc += coef * static_cast<std::int64_t>(z[r]);
    }
    c[t] = ar.reduce(acc);
  }
  std::vector<std::uint64_t> x(ar.n(), 0);
  for (int i = 0; i < ar.n(); ++i) {
    std::uint64_t known = 0;
    for (int t = 0; t < k; ++t) {
      const int j = k - 1 - t;
      const std::uint64_t val = ar.reduce(static_cast<std::int64_t>(c[i * k + j]) -
                                          static_cast<std::int64_t>((known << j) & (q - 1)));
      const std::int64_t cv = ar.centered(val);
      if (std::abs(cv) > static_cast<std::int64_t>(q / 4)) known |= 1ULL << t;
    }
    x[i] = known;
  }
  return x;
}

inline const IdealKey& ideal_key(const PublicKey& pk) {
  if (!std::holds_alternative<IdealKey>(pk.payload)) throw StructuralError("expected an ideal-backend key");
  return std::get<IdealKey>(pk.payload);
}

inline const LweKey& lwe_key(const PublicKey& pk) {
  if (!std::holds_alternative<LweKey>(pk.payload)) throw StructuralError("expected an lwe-backend key");
  return std::get<LweKey>(pk.payload);
}

inline void require_preimage_length(const PublicKey& pk, const Preimage& x) {
  if (static_cast<int>(x.size()) != pk.params.preimage_bits)
    throw StructuralError("preimage has " + std::to_string(x.size()) + " bits, expected " +
                          std::to_string(pk.params.preimage_bits));
}

inline bool image_well_formed(const PublicKey& pk, const Image& y) {
  if (pk.params.backend == Backend::ideal) {
    if (!y.is_ideal()) return false;
    return 2 * pk.params.preimage_bits >= 64 || (y.tag() >> (2 * pk.params.preimage_bits)) == 0;
  }
  if (y.is_ideal()) return false;
  if (static_cast<int>(y.coords().size()) != pk.params.lwe_m) return false;
  return std::all_of(y.coords().begin(), y.coords().end(), [&](std::uint64_t c) { return c < pk.params.lwe_q; });
}

inline std::uint64_t ideal_input(const PublicKey& pk, int b, std::uint64_t x) {
  const auto& key = ideal_key(pk);
  if (pk.family == Family::F) return x ^ (b ? key.shift : 0);
  return x | (static_cast<std::uint64_t>(b & 1) << pk.params.preimage_bits);
}

}  // namespace detail

/// Samples a key and its trapdoor from the F (claw-free) or G (injective) family.
inline KeyPair gen(Family family, const EntcfParams& params, Rng& rng) {
  params.validate();
  if (params.backend == Backend::ideal) {
    const int w = params.preimage_bits;
    const std::uint64_t seed = rng.next();
    std::uint64_t shift = 0;
    if (family == Family::F) {
      do {
        shift = rng.next() & detail::low_mask(w);
      } while (shift == 0);
    }
    return {PublicKey{family, params, IdealKey{seed, shift}}, Trapdoor{family, IdealTrapdoor{seed, shift}}};
  }

  const detail::LweArith ar(params);
  const int n = ar.n(), m = ar.m(), k = ar.k();
  const int mbar = params.trapdoor_rows();
  const int rows = params.gadget_rows();
  const int weight = params.trapdoor_weight();

  LweTrapdoor td;
  td.r.assign(static_cast<std::size_t>(mbar) * rows, 0);
  for (int col = 0; col < rows; ++col) {
    for (int placed = 0; placed < weight;) {
      const auto row = static_cast<int>(rng.below(static_cast<std::uint64_t>(mbar)));
      int& slot = td.r[row * rows + col];
      if (slot != 0) continue;
      slot = rng.bit() ? 1 : -1;
      ++placed;
    }
  }

  LweKey key;
  key.a.assign(static_cast<std::size_t>(m) * n, 0);
  for (int r = 0; r < mbar; ++r)
    for (int c = 0; c < n; ++c) key.a[r * n + c] = rng.below(ar.q());
  // Bottom block: G^T − R^T Ā, gadget row (i, j) holds 2^j in column i.
  for (int t = 0; t < rows; ++t) {
    const int i = t / k, j = t % k;
    for (int c = 0; c < n; ++c) {
      std::int64_t acc = (c == i) ? (std::int64_t{1} << j) : 0;
      for (int r = 0; r < mbar; ++r) {
        const int coef = td.r[r * rows + t];
        if (coef) acc -= coef * static_cast<std::int64_t>(key.a[r * n + c]);
      }
      key.a[(mbar + t) * n + c] = ar.reduce(acc);
    }
  }

  if (family == Family::F) {
    td.s.resize(n);
    for (auto& v : td.s) v = rng.below(ar.q());
    td.e.resize(m);
    for (auto& v : td.e) v = detail::sample_noise(rng, params.bound_eval, params.gaussian_width);
    const auto as = ar.apply(key.a, td.s);
    key.u.resize(m);
    for (int r = 0; r < m; ++r) key.u[r] = ar.reduce(static_cast<std::int64_t>(as[r]) + td.e[r]);
  } else {
    // Uniform u, rejected when it lies within 2*B_P of the lattice A Z_q^n
    // (that would let an image have preimages under both b).
    constexpr int kMaxAttempts = 64;
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt == kMaxAttempts) throw ConfigError("G-key generation: could not sample a disjoint u");
      key.u.resize(m);
      for (auto& v : key.u) v = rng.below(ar.q());
      const auto z = detail::gadget_decode(params, td, key.u);
      if (ar.residual_norm(key, key.u, z, 0) > 2 * params.bound_check) break;
    }
  }
  return {PublicKey{family, params, std::move(key)}, Trapdoor{family, std::move(td)}};
}

/// Samples y from f_{k,b}(x).
inline Image eval_sample(const PublicKey& pk, int b, const Preimage& x, Rng& rng) {
  detail::require_preimage_length(pk, x);
  const auto& p = pk.params;
  if (p.backend == Backend::ideal) {
    const auto& key = detail::ideal_key(pk);
    const detail::FeistelPermutation pi(key.seed, p.preimage_bits);
    return Image::ideal(pi.forward(detail::ideal_input(pk, b, x.to_uint())));
  }
  const auto& key = detail::lwe_key(pk);
  const detail::LweArith ar(p);
  auto y = ar.apply(key.a, ar.decode_preimage(x));
  for (int r = 0; r < ar.m(); ++r) {
    const std::int64_t noise = detail::sample_noise(rng, p.bound_eval, p.gaussian_width);
    y[r] = ar.reduce(static_cast<std::int64_t>(y[r]) + (b ? static_cast<std::int64_t>(key.u[r]) : 0) + noise);
  }
  return Image::lwe(std::move(y));
}

/// True iff y lies in the support of f_{k,b}(x).
inline bool chk(const PublicKey& pk, const Image& y, int b, const Preimage& x) {
  if (static_cast<int>(x.size()) != pk.params.preimage_bits) return false;
  if (!detail::image_well_formed(pk, y)) return false;
  const auto& p = pk.params;
  if (p.backend == Backend::ideal) {
    const auto& key = detail::ideal_key(pk);
    const detail::FeistelPermutation pi(key.seed, p.preimage_bits);
    return pi.forward(detail::ideal_input(pk, b, x.to_uint())) == y.tag();
  }
  const detail::LweArith ar(p);
  return ar.residual_norm(detail::lwe_key(pk), y.coords(), ar.decode_preimage(x), b) <= p.bound_check;
}

/// x̂_b(k, y), or nullopt when y has no preimage under f_{k,b}.
inline std::optional<Preimage> invert(const Trapdoor& td, const PublicKey& pk, int b, const Image& y) {
  if (!detail::image_well_formed(pk, y)) return std::nullopt;
  const auto& p = pk.params;
  if (p.backend == Backend::ideal) {
    const auto& t = std::get<IdealTrapdoor>(td.payload);
    const int w = p.preimage_bits;
    const detail::FeistelPermutation pi(t.seed, w);
    const std::uint64_t v = pi.inverse(y.tag());
    const std::uint64_t high = v >> w;
    if (pk.family == Family::F) {
      if (high != 0) return std::nullopt;
      return Preimage::from_uint(v ^ (b ? t.shift : 0), static_cast<std::size_t>(w));
    }
    if (high != static_cast<std::uint64_t>(b & 1)) return std::nullopt;
    return Preimage::from_uint(v & detail::low_mask(w), static_cast<std::size_t>(w));
  }
  const auto& t = std::get<LweTrapdoor>(td.payload);
  const auto& key = detail::lwe_key(pk);
  const detail::LweArith ar(p);
  std::vector<std::uint64_t> z = y.coords();
  if (b)
    for (int r = 0; r < ar.m(); ++r) z[r] = ar.reduce(static_cast<std::int64_t>(z[r]) - static_cast<std::int64_t>(key.u[r]));
  auto x = detail::gadget_decode(p, t, z);
  if (ar.residual_norm(key, y.coords(), x, b) > p.bound_check) return std::nullopt;
  return ar.encode_preimage(x);
}

/// b̂(k, y) for an injective (G) key.
inline int decode_bit(const Trapdoor& td, const PublicKey& pk, const Image& y) {
  if (pk.family != Family::G) throw FamilyError("decode_bit requires a G key");
  if (invert(td, pk, 0, y)) return 0;
  if (invert(td, pk, 1, y)) return 1;
  throw InvalidImageError("image lies outside both functions of the injective pair");
}

/// û(k, y, d) = d · (x̂_0 ⊕ x̂_1) for a claw-free (F) key; nullopt when y has no claw.
inline std::optional<EquationBit> decode_equation(const Trapdoor& td, const PublicKey& pk, const Image& y,
                                                  const BitString& d) {
  if (pk.family != Family::F) throw FamilyError("decode_equation requires an F key");
  if (static_cast<int>(d.size()) != pk.params.preimage_bits)
    throw StructuralError("equation string has wrong length");
  const auto x0 = invert(td, pk, 0, y);
  if (!x0) return std::nullopt;
  const auto x1 = invert(td, pk, 1, y);
  if (!x1) return std::nullopt;
  return EquationBit{dot(d, *x0 ^ *x1), d.is_zero()};
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json params_to_json(const EntcfParams& p) {
  return {{"backend", to_string(p.backend)},   {"security_bits", p.security_bits}, {"lwe_n", p.lwe_n},
          {"lwe_q", p.lwe_q},                  {"lwe_m", p.lwe_m},                 {"bound_eval", p.bound_eval},
          {"bound_check", p.bound_check},      {"gaussian_width", p.gaussian_width},
          {"preimage_bits", p.preimage_bits}};
}

// Fields absent from `j` keep the defaults of the named backend.
inline EntcfParams params_from_json(const nlohmann::json& j) {
  const Backend backend = backend_from_string(j.value("backend", std::string("ideal")));
  EntcfParams p = backend == Backend::ideal ? EntcfParams::ideal() : EntcfParams::lwe();
  p.security_bits = j.value("security_bits", p.security_bits);
  p.lwe_n = j.value("lwe_n", p.lwe_n);
  p.lwe_q = j.value("lwe_q", p.lwe_q);
  p.lwe_m = j.value("lwe_m", p.lwe_m);
  p.bound_eval = j.value("bound_eval", p.bound_eval);
  p.bound_check = j.value("bound_check", p.bound_check);
  p.gaussian_width = j.value("gaussian_width", p.gaussian_width);
  if (backend == Backend::lwe && !j.contains("preimage_bits"))
    p.preimage_bits = p.gadget_rows();
  else
    p.preimage_bits = j.value("preimage_bits", p.preimage_bits);
  return p;
}

namespace detail {

inline std::string words_to_hex(const std::vector<std::uint64_t>& words, int digits) {
  static constexpr char hexd[] = "0123456789abcdef";
  std::string out;
  out.reserve(words.size() * static_cast<std::size_t>(digits));
  for (auto w : words)
    for (int k = digits - 1; k >= 0; --k) out.push_back(hexd[(w >> (4 * k)) & 0xF]);
  return out;
}

inline std::vector<std::uint64_t> words_from_hex(const std::string& hex, int digits, std::size_t count) {
  if (hex.size() != count * static_cast<std::size_t>(digits))
    throw MalformedMessageError("hex vector has " + std::to_string(hex.size()) + " digits, expected " +
                                std::to_string(count * digits));
  std::vector<std::uint64_t> out(count, 0);
  for (std::size_t i = 0; i < count; ++i)
    for (int k = 0; k < digits; ++k)
      out[i] = (out[i] << 4) | static_cast<std::uint64_t>(BitString::hex_value(hex[i * digits + k]));
  return out;
}

inline int coord_digits(const EntcfParams& p) { return (p.log_q() + 3) / 4; }
inline int tag_digits(const EntcfParams& p) { return (2 * p.preimage_bits + 3) / 4; }

}  // namespace detail

inline std::string image_to_hex(const Image& y, const EntcfParams& p) {
  if (p.backend == Backend::ideal) return detail::words_to_hex({y.tag()}, detail::tag_digits(p));
  return detail::words_to_hex(y.coords(), detail::coord_digits(p));
}

inline Image image_from_hex(const std::string& hex, const EntcfParams& p) {
  if (p.backend == Backend::ideal) return Image::ideal(detail::words_from_hex(hex, detail::tag_digits(p), 1)[0]);
  return Image::lwe(detail::words_from_hex(hex, detail::coord_digits(p), static_cast<std::size_t>(p.lwe_m)));
}

inline constexpr int kKeyFormatVersion = 1;

inline nlohmann::json public_key_to_json(const PublicKey& pk) {
  nlohmann::json payload;
  if (const auto* ik = std::get_if<IdealKey>(&pk.payload)) {
    payload = {{"seed", ik->seed}, {"shift", ik->shift}};
  } else {
    const auto& lk = std::get<LweKey>(pk.payload);
    const int digits = detail::coord_digits(pk.params);
    payload = {{"A", detail::words_to_hex(lk.a, digits)}, {"u", detail::words_to_hex(lk.u, digits)}};
  }
  return {{"version", kKeyFormatVersion},
          {"backend", to_string(pk.params.backend)},
          {"family", to_string(pk.family)},
          {"params", params_to_json(pk.params)},
          {"payload", std::move(payload)}};
}

inline PublicKey public_key_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kKeyFormatVersion) throw MalformedMessageError("unsupported key version");
    PublicKey pk;
    pk.family = family_from_string(j.at("family").get<std::string>());
    pk.params = params_from_json(j.at("params"));
    pk.params.validate();
    const auto& pl = j.at("payload");
    if (pk.params.backend == Backend::ideal) {
      pk.payload = IdealKey{pl.at("seed").get<std::uint64_t>(), pl.at("shift").get<std::uint64_t>()};
    } else {
      const int digits = detail::coord_digits(pk.params);
      const auto m = static_cast<std::size_t>(pk.params.lwe_m), n = static_cast<std::size_t>(pk.params.lwe_n);
      pk.payload = LweKey{detail::words_from_hex(pl.at("A").get<std::string>(), digits, m * n),
                          detail::words_from_hex(pl.at("u").get<std::string>(), digits, m)};
    }
    return pk;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("public key: ") + e.what());
  }
}

inline nlohmann::json trapdoor_to_json(const Trapdoor& td, const EntcfParams& p) {
  nlohmann::json payload;
  if (const auto* it = std::get_if<IdealTrapdoor>(&td.payload)) {
    payload = {{"seed", it->seed}, {"shift", it->shift}};
  } else {
    const auto& lt = std::get<LweTrapdoor>(td.payload);
    payload = {{"R", lt.r}, {"s", detail::words_to_hex(lt.s, detail::coord_digits(p))}, {"e", lt.e}};
  }
  return {{"version", kKeyFormatVersion},
          {"backend", to_string(p.backend)},
          {"family", to_string(td.family)},
          {"params", params_to_json(p)},
          {"payload", std::move(payload)}};
}

inline Trapdoor trapdoor_from_json(const nlohmann::json& j) {
  try {
    Trapdoor td;
    td.family = family_from_string(j.at("family").get<std::string>());
    const EntcfParams p = params_from_json(j.at("params"));
    const auto& pl = j.at("payload");
    if (p.backend == Backend::ideal) {
      td.payload = IdealTrapdoor{pl.at("seed").get<std::uint64_t>(), pl.at("shift").get<std::uint64_t>()};
    } else {
      LweTrapdoor lt;
      lt.r = pl.at("R").get<std::vector<int>>();
      const auto s_hex = pl.at("s").get<std::string>();
      lt.s = detail::words_from_hex(s_hex, detail::coord_digits(p),
                                    s_hex.size() / static_cast<std::size_t>(detail::coord_digits(p)));
      lt.e = pl.at("e").get<std::vector<std::int64_t>>();
      td.payload = std::move(lt);
    }
    return td;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("trapdoor: ") + e.what());
  }
}

}  // namespace qst
