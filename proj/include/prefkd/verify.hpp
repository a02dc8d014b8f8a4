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

#ifndef PREFKD_VERIFY_HPP_
#define PREFKD_VERIFY_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace prefkd {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 2026;
  int pairs_per_setting = 1000;  // decomposition identity sweep
  int fd_instances = 100;        // per gradient suite
};

/// Runs the numerical identity, gradient, schedule, closed-form, and metric
/// fixture checks. Every check is deterministic for a fixed seed.
std::vector<CheckResult> run_verification_suite(const VerifyOptions& options);

/// Aligned plain-text table of results.
std::string render_check_results(const std::vector<CheckResult>& results);

}  // namespace prefkd

#endif  // PREFKD_VERIFY_HPP_
