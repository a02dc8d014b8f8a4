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

#ifndef PREFKD_REWARD_HPP_
#define PREFKD_REWARD_HPP_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefkd/corpus.hpp"
#include "prefkd/toylm.hpp"

namespace prefkd {

enum class RewardScheme {
  pad_avg_loglik,
  dpo_ratio,
  minillm_ratio,
  mcq,
  p_true,
  p_true_ref,
  calibrated,
};

/// Per-response scalar rewards for one case.
struct RewardVector {
  std::string prompt_id;
  std::vector<double> values;
  RewardScheme scheme = RewardScheme::pad_avg_loglik;
};

/// Length-averaged log-likelihood: log p_model(y) / |y|. Always <= 0.
double pad_reward(const LogitTable& model, std::span<const int> prompt,
                  const Response& response);

/// log p_current(y) - log p_reference(y). Models must share (V, m).
double dpo_reward(const LogitTable& current, const LogitTable& reference,
                  std::span<const int> prompt, const Response& response);

/// log p_teacher(y) - log p_student(y). Models must share (V, m).
double minillm_reward(const LogitTable& teacher, const LogitTable& student,
                      std::span<const int> prompt, const Response& response);

/// pad_reward applied to every response of a case.
RewardVector pad_rewards_for_case(const LogitTable& model, const PromptCase& c);

/// Teacher-as-judge abstraction. Synthetic implementations stand in for LLM
/// judges so the calibration and metric machinery is testable offline.
class JudgeOracle {
 public:
  virtual ~JudgeOracle() = default;

  /// P(candidate `index` is good | prompt, response); must lie in [0, 1].
  /// `with_reference` additionally exposes the full candidate set to the
  /// judge; implementations may ignore it.
  virtual double p_true(const PromptCase& c, int index,
                        bool with_reference) const = 0;

  /// Option-probability vector over all candidates in one query;
  /// entries >= 0 and summing to 1 within 1e-9.
  virtual std::vector<double> mcq(const PromptCase& c) const = 0;

  /// Largest candidate set mcq() accepts.
  virtual int mcq_option_capacity() const { return 26; }

  /// Implementations unsafe under concurrent queries return false; callers
  /// must then serialize.
  virtual bool concurrent_safe() const { return true; }
};

/// Indifferent judge: p_true = 1/2, mcq uniform.
class UniformJudge final : public JudgeOracle {
 public:
  double p_true(const PromptCase&, int, bool) const override { return 0.5; }
  std::vector<double> mcq(const PromptCase& c) const override;
};

/// Judge driven by a (prompt_id, response index) -> score table. p_true
/// returns the raw stored score; mcq softmax-normalizes the case's scores.
class ScoreTableJudge final : public JudgeOracle {
 public:
  explicit ScoreTableJudge(std::map<std::pair<std::string, int>, double> table)
      : table_(std::move(table)) {}
  /// One JSON record per line: prompt_id, response_index, score.
  static ScoreTableJudge from_file(const std::filesystem::path& path);

  double p_true(const PromptCase& c, int index, bool) const override;
  std::vector<double> mcq(const PromptCase& c) const override;

 private:
  double lookup(const std::string& prompt_id, int index) const;
  std::map<std::pair<std::string, int>, double> table_;
};

/// Judge that prefers longer responses: p_true = len / (len + half_length),
/// mcq proportional to lengths. A deliberate length-bias probe.
class LengthBiasedJudge final : public JudgeOracle {
 public:
  explicit LengthBiasedJudge(double half_length = 8.0)
      : half_length_(half_length) {}
  double p_true(const PromptCase& c, int index, bool) const override;
  std::vector<double> mcq(const PromptCase& c) const override;

 private:
  double half_length_;
};

/// One-query option probabilities, order-aligned with the responses.
/// Throws OracleContractError if the judge's vector is not a distribution.
RewardVector mcq_rewards(const JudgeOracle& judge, const PromptCase& c);

/// One judge query per response (n queries total, vs 1 for mcq_rewards).
/// Throws OracleContractError if any value leaves [0, 1].
RewardVector p_true_rewards(const JudgeOracle& judge, const PromptCase& c,
                            bool with_reference);

/// Per-case z-standardization (population sigma); all-equal input maps to
/// all zeros.
std::vector<double> standardize(std::span<const double> values);

/// alpha-blend of standardized judge and intrinsic rewards:
/// alpha * z(judge) + (1 - alpha) * z(intrinsic). Both inputs are
/// standardized first so that probabilities and log-likelihoods blend on a
/// common scale; the blend form itself is this toolkit's choice.
RewardVector calibrate_reward(const RewardVector& judge_r,
                              const RewardVector& intrinsic_r, double alpha);

inline PreferencePair build_max_min_pair(const PromptCase& c,
                                         const RewardVector& rewards,
                                         PairSource source = PairSource::teacher_annotated) {
  return build_max_min_pair(c, std::span<const double>(rewards.values), source);
}

}  // namespace prefkd

#endif  // PREFKD_REWARD_HPP_
