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

#ifndef PREFKD_CORPUS_HPP_
#define PREFKD_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefkd/toylm.hpp"

namespace prefkd {

/// A prompt with n >= 2 candidate responses, optionally annotated with
/// per-response teacher scores and a human ranking (1 = best).
struct PromptCase {
  std::string prompt_id;
  std::vector<int> prompt;
  std::vector<Response> responses;
  std::optional<std::vector<double>> teacher_scores;
  std::optional<std::vector<int>> human_ranks;

  int n() const { return static_cast<int>(responses.size()); }
  /// Throws ValidationError naming prompt_id on any invariant violation.
  void validate() const;

  bool operator==(const PromptCase&) const = default;
};

enum class PairSource { human, teacher_annotated };

struct PreferencePair {
  std::string prompt_id;
  int winner_idx = 0;
  int loser_idx = 0;
  PairSource source = PairSource::teacher_annotated;
};

/// One JSON record per line: prompt_id, prompt, responses, and optionally
/// teacher_scores / human_ranks. Order preserved; every record validated.
std::vector<PromptCase> load_corpus(const std::filesystem::path& path);

/// Byte-stable for identical input; output readable by load_corpus.
void save_corpus(std::span<const PromptCase> cases,
                 const std::filesystem::path& path);

/// Winner = argmax(rewards), loser = argmin(rewards), ties broken toward the
/// lowest index. Throws DegeneratePairError when all rewards are equal.
PreferencePair build_max_min_pair(const PromptCase& c,
                                  std::span<const double> rewards,
                                  PairSource source = PairSource::teacher_annotated);

/// Rank of each score, 1 = highest, stable (lowest index first) on ties.
std::vector<int> ranks_from_scores(std::span<const double> scores);

/// Synthetic corpus generation. Prompts are fixed-length random token
/// sequences; responses are sampled from `teacher` at the given temperature.
struct GenConfig {
  int num_cases = 512;
  int vocab_size = 12;
  int order = 1;
  int n_responses = 4;
  int prompt_len = 3;
  /// Sampling cutoff; the desk-scale stand-in for a context-length filter.
  int max_len = 16;
  double temperature = 1.0;
  /// When > 0, per-case responses are resampled until adjacent teacher
  /// rewards (sorted) differ by at least this gap: the fine-grained task.
  double min_reward_gap = 0.0;
  bool with_teacher_scores = true;
  bool with_human_ranks = true;

  void validate() const;  // throws ConfigError
};

std::vector<PromptCase> generate_synthetic_corpus(const LogitTable& teacher,
                                                  const GenConfig& config,
                                                  std::uint64_t seed);

}  // namespace prefkd

#endif  // PREFKD_CORPUS_HPP_
