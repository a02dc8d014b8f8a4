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

#ifndef PREFKD_CLI_HPP_
#define PREFKD_CLI_HPP_

#include <string>
#include <vector>

namespace prefkd {

/// Subcommands: generate, distill, sweep, eval, verify.
/// Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace prefkd

#endif  // PREFKD_CLI_HPP_
