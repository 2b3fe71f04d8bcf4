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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qselftest/errors.hpp"
#include "qselftest/rng.hpp"

namespace qst {

/// Fixed-length bit string. Bit 0 is the first bit of the J-encoding.
class BitString {
 public:
  BitString() = default;
  explicit BitString(std::size_t length) : bits_(length, 0) {}

  static BitString from_uint(std::uint64_t value, std::size_t length) {
    BitString out(length);
    for (std::size_t i = 0; i < length && i < 64; ++i) out.bits_[i] = (value >> i) & 1U;
    return out;
  }

  static BitString random(std::size_t length, Rng& rng) {
    BitString out(length);
    for (std::size_t i = 0; i < length; i += 64) {
      const std::uint64_t word = rng.next();
      for (std::size_t j = 0; j < 64 && i + j < length; ++j) out.bits_[i + j] = (word >> j) & 1U;
    }
    return out;
  }

  std::size_t size() const { return bits_.size(); }
  int operator[](std::size_t i) const { return bits_[i]; }
  void set(std::size_t i, int v) { bits_[i] = static_cast<std::uint8_t>(v & 1); }
  void flip(std::size_t i) { bits_[i] ^= 1U; }

  // Low 64 bits as an integer.
  std::uint64_t to_uint() const {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits_.size() && i < 64; ++i) v |= std::uint64_t{bits_[i]} << i;
    return v;
  }

  bool is_zero() const {
    for (auto b : bits_)
      if (b) return false;
    return true;
  }

  friend BitString operator^(const BitString& a, const BitString& b) {
    if (a.size() != b.size()) throw StructuralError("bit string length mismatch in xor");
    BitString out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.bits_[i] = a.bits_[i] ^ b.bits_[i];
    return out;
  }

  friend bool operator==(const BitString&, const BitString&) = default;

  // Hex digit k carries bits 4k..4k+3, least significant first.
  std::string to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out((bits_.size() + 3) / 4, '0');
    for (std::size_t k = 0; k < out.size(); ++k) {
      unsigned nib = 0;
      for (std::size_t j = 0; j < 4 && 4 * k + j < bits_.size(); ++j) nib |= unsigned{bits_[4 * k + j]} << j;
      out[k] = digits[nib];
    }
    return out;
  }

  static BitString from_hex(std::string_view hex, std::size_t length) {
    if (hex.size() != (length + 3) / 4)
      throw MalformedMessageError("bit string hex has " + std::to_string(hex.size()) + " digits, expected " +
                                  std::to_string((length + 3) / 4));
    BitString out(length);
    for (std::size_t k = 0; k < hex.size(); ++k) {
      const int nib = hex_value(hex[k]);
      for (std::size_t j = 0; j < 4; ++j) {
        const int b = (nib >> j) & 1;
        if (4 * k + j < length)
          out.bits_[4 * k + j] = static_cast<std::uint8_t>(b);
        else if (b)
          throw MalformedMessageError("bit string hex has bits set past its length");
      }
    }
    return out;
  }

  static int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw MalformedMessageError(std::string("invalid hex digit '") + c + "'");
  }

 private:
  std::vector<std::uint8_t> bits_;
};

// Inner product mod 2.
inline int dot(const BitString& a, const BitString& b) {
  if (a.size() != b.size()) throw StructuralError("bit string length mismatch in dot product");
  int acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc ^= a[i] & b[i];
  return acc;
}

}  // namespace qst
