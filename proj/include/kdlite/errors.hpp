/*
 * Copyright 2026 The kdlite Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace kdlite {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree with what an operator requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (rates, sizes, temperatures, flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not support the call.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (non-scalar loss, mismatched maps, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A forward value or loss became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or incompatible input data or files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// File written by a newer major version of a format.
class VersionError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace kdlite
