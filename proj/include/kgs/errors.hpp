// Copyright 2026 The KGS-GCN Authors
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

namespace kgs {

/// Base of every error raised by the library. The CLI prints what() as a
/// one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message names the offending line or field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Tensor or payload shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Values out of their domain (non-finite coordinates, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (learning rate, resolution, split fractions...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Matrix that should be symmetric positive definite is not.
class MatrixError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. requesting gradients of a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgs
