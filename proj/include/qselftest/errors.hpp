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

#include <stdexcept>
#include <string>

namespace qst {

// Dimensions or shapes do not line up.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value violates a numerical invariant (Hermiticity, idempotence, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid parameter set or a key generation that could not complete.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation requested on the wrong function family (F vs G).
class FamilyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Image lies outside the support of both functions of a pair.
class InvalidImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Message arrived in a phase that does not accept it.
class ProtocolStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Message is syntactically wrong (bad length, bad hex, missing field).
class MalformedMessageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A prover gave up on the session (retry budget exhausted).
class AbortSessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qst
