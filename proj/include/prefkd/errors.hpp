/*
 * Copyright 2026 The prefkd Authors.
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

#ifndef PREFKD_ERRORS_HPP_
#define PREFKD_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace prefkd {

/// Base of every error prefkd throws deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record; message names the offending line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A domain-type invariant was violated; message names the offending object.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (out-of-range token, bad shape,
/// non-positive temperature, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid run or generation configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Explicit (n! sized) forms requested beyond their size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Absolute continuity violated: p > 0 somewhere q == 0.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// All rewards equal: no strict preference pair exists.
class DegeneratePairError : public Error {
 public:
  using Error::Error;
};

/// A judge implementation broke its contract (non-normalized MCQ vector,
/// probability outside [0, 1]).
class OracleContractError : public Error {
 public:
  using Error::Error;
};

/// Metric has an empty effective denominator.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefkd

#endif  // PREFKD_ERRORS_HPP_
