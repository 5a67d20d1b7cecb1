// Copyright 2026 The SAPALM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace sapalm {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid scalar parameter (negative threshold, stepsize out of range, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Structural mismatch: block shapes disagree, unknown block index, an
// operation requested on a problem that cannot support it.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A run aborted mid-flight (non-finite iterate, inconsistent counters).
// The message carries iteration and block context for postmortems.
class EngineError : public Error {
 public:
  using Error::Error;
};

// Config parse / file format errors.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sapalm
