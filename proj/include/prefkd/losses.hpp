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

#ifndef PREFKD_LOSSES_HPP_
#define PREFKD_LOSSES_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefkd/preference.hpp"
#include "prefkd/toylm.hpp"

namespace prefkd {

/// A loss value plus whichever analytic gradients the loss supports.
/// Vector gradients are over per-response quantities; the table gradient is
/// over the student's full logit table (model-parameter losses).
struct LossResult {
  double value = 0.0;
  std::optional<std::vector<double>> grad_student_rewards;
  std::optional<std::vector<double>> grad_student_logits;
  std::optional<LogitTable> grad_student_params;
  std::map<std::string, double> diagnostics;
};

enum class ScheduleKind { linear, cosine };

/// Annealing weight: lambda(0) = 0 and lambda(total_steps) = 1 for every kind.
struct LambdaSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  long total_steps = 1;

  /// Throws DomainError outside [0, total_steps].
  double lambda_at(long step) const;
};

/// Symmetrized divergence between the teacher's reward-induced ranking
/// distribution and the gamma-mixture of teacher and student distributions,
/// computed factor-wise. Gradient flows through the student rewards only.
LossResult ppd_loss(std::span<const double> teacher_rewards,
                    std::span<const double> student_rewards, double beta,
                    double gamma);

/// Ordered index pairs {(i, j) : s_i > s_j}; ties produce no pair.
std::vector<std::pair<int, int>> build_pair_set(std::span<const double> teacher_scores);

/// -sum over pairs of log sigmoid((logq_i - logq_j) / tau). The value is the
/// raw sum; diagnostics carry the pair count for callers that average.
LossResult group_relative_loss(std::span<const double> student_logq,
                               std::span<const std::pair<int, int>> pairs,
                               double tau);

/// Cross-entropy -sum p_i logq_i. teacher_p must be a distribution; the
/// gradient is reported with respect to student logits (softmax(logq) - p).
LossResult soft_target_loss(std::span<const double> teacher_p,
                            std::span<const double> student_logq);

/// lambda * gr + (1 - lambda) * st with lambda from the schedule. Returns gr
/// or st unchanged at the endpoints, so the blend is bitwise exact there.
LossResult grkd_total_loss(const LossResult& gr, const LossResult& st, long step,
                           const LambdaSchedule& schedule);

/// Mean over response positions of KL(softmax(teacher/T) || softmax(student/T)).
LossResult standard_kd_loss(const LogitTable& teacher, const LogitTable& student,
                            std::span<const int> prompt, const Response& response,
                            double temperature);

/// Length-normalized negative log-likelihood of a teacher sample.
LossResult seqkd_loss(const LogitTable& student, std::span<const int> prompt,
                      const Response& teacher_sample);

/// Per-case weighted SFT loss: weights are the softmax over responses of the
/// teacher/student log-likelihood ratio and are held constant in the
/// gradient; the value is sum_i w_i * NLL_i with length-normalized NLL.
LossResult minillm_weighted_loss(const LogitTable& teacher,
                                 const LogitTable& student,
                                 std::span<const int> prompt,
                                 std::span<const Response> responses);

/// -log sigmoid(beta_d * (r(winner) - r(loser))) with r the policy/reference
/// log-likelihood ratio.
LossResult dpo_loss(const LogitTable& policy, const LogitTable& reference,
                    std::span<const int> prompt, const Response& winner,
                    const Response& loser, double beta_d);

/// -log sigmoid(beta_s * (avg-loglik margin) - margin); reference-free.
LossResult simpo_loss(const LogitTable& policy, std::span<const int> prompt,
                      const Response& winner, const Response& loser,
                      double beta_s, double margin);

/// Listwise ranking NLL: negative log of the sequential-choice probability of
/// the given ranking under the policy rewards (scaled by 1/temperature).
/// `ranking` holds the rank of each response, 1 = best, as produced by
/// ranks_from_scores.
LossResult pro_loss(std::span<const double> policy_rewards,
                    std::span<const int> ranking, double temperature);

/// Per-case blended objective on one shared log-score vector z:
/// logq = log_softmax(z), value = lambda * mean-pair group-relative loss
/// + (1 - lambda) * soft-target loss, gradient with respect to z.
LossResult grkd_case_loss(std::span<const double> z,
                          std::span<const double> teacher_p,
                          std::span<const std::pair<int, int>> pairs, double tau,
                          double lambda);

}  // namespace prefkd

#endif  // PREFKD_LOSSES_HPP_
