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

#ifndef PREFKD_METRICS_HPP_
#define PREFKD_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefkd/corpus.hpp"
#include "prefkd/toylm.hpp"

namespace prefkd {

/// Human and predicted ranks of one (good, bad) response pair; each side is a
/// permutation of {1, 2}.
struct RankedPair {
  int human_rank_good = 1;
  int human_rank_bad = 2;
  int pred_rank_good = 1;
  int pred_rank_bad = 2;
};

/// 1 - mean over pairs of (|d rank(good)| + |d rank(bad)|). 1 on perfect
/// prediction sets, -1 on fully inverted ones.
double human_agreement(std::span<const RankedPair> pairs);

struct LengthPair {
  int preferred_len = 0;
  int other_len = 0;
};

/// Fraction of unequal-length pairs whose preferred response is the longer
/// one. Equal lengths leave the denominator; an empty effective denominator
/// throws UndefinedMetricError.
double prob_prefer_longer(std::span<const LengthPair> pairs);

/// Comparator verdict for one aligned output pair: > 0 candidate wins,
/// 0 tie, < 0 baseline wins.
using Comparator = std::function<int(const Response& candidate, const Response& baseline)>;

/// (wins + ties/2) / total over aligned output lists.
double pairwise_winrate(const Comparator& judge,
                        std::span<const Response> candidate_outputs,
                        std::span<const Response> baseline_outputs);

/// Kendall tau-a between two rank vectors (permutations of equal length):
/// (concordant - discordant) / C(n, 2).
double kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b);

struct MetricReport {
  std::optional<double> human_agreement;
  std::optional<double> prob_prefer_longer;
  std::optional<double> pairwise_winrate;
  std::optional<double> kendall_tau_mean;
  std::map<std::string, long> counts;
};

/// Corpus-level evaluation of a student model. Reference ranks come from the
/// teacher when given, else from stored human_ranks. Win rate is computed
/// when both teacher and baseline are given: one sampled output per prompt
/// from student and baseline, judged by teacher average log-likelihood.
MetricReport evaluate_corpus(const std::vector<PromptCase>& corpus,
                             const LogitTable& student, const LogitTable* teacher,
                             const LogitTable* baseline, std::uint64_t seed);

void write_metric_report_csv(const MetricReport& report,
                             const std::filesystem::path& path);
std::string render_metric_report(const MetricReport& report);

/// Per-response reward dump: one row per (prompt_id, response index) with the
/// student's (and, when given, the teacher's) average log-likelihood reward.
void write_reward_dump_csv(const std::vector<PromptCase>& corpus,
                           const LogitTable& student, const LogitTable* teacher,
                           const std::filesystem::path& path);

}  // namespace prefkd

#endif  // PREFKD_METRICS_HPP_
