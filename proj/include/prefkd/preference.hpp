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

#ifndef PREFKD_PREFERENCE_HPP_
#define PREFKD_PREFERENCE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "prefkd/reward.hpp"

namespace prefkd {

/// A distribution over full orderings of n candidates, stored in
/// sequential-choice form: one categorical row per remaining-candidate set
/// (bitmask), giving the probability of picking each member next. A full
/// ranking's probability is the product of its k = n-1 choice factors; the
/// explicit n!-entry form is materialized for n <= kMaxExplicitN.
///
/// This factorization is what makes the divergence between two such
/// distributions decompose exactly into per-choice terms (see kld_factored),
/// mirroring the sequential sub-preference view of a full preference.
class RankingDist {
 public:
  static constexpr int kMaxExplicitN = 6;
  static constexpr int kMaxFactoredN = 16;

  /// Builds from conditional rows. rows[mask], for every mask with
  /// popcount >= 2, is the categorical over the set bits of mask in
  /// ascending candidate order; each row must normalize within 1e-9.
  static RankingDist from_rows(int n, std::vector<std::vector<double>> rows);

  int n() const { return n_; }
  int num_factors() const { return n_ - 1; }

  /// Choice probabilities for the remaining set `mask` (popcount >= 2),
  /// aligned with the set bits in ascending order.
  const std::vector<double>& row(std::uint32_t mask) const;

  bool has_explicit_form() const { return !explicit_.empty(); }
  /// Probability of every ranking, indexed by lexicographic permutation
  /// rank. Throws CapacityError when n > kMaxExplicitN.
  const std::vector<double>& explicit_probs() const;

  /// Probability of one best-first ranking; product of its choice factors.
  /// Works for any n, explicit form or not.
  double ranking_prob(std::span<const int> ranking) const;

  /// Probability of arriving at each remaining-candidate set while drawing a
  /// ranking; reach[full set] = 1, indexed by mask.
  std::vector<double> reach_probabilities() const;

 private:
  int n_ = 0;
  std::vector<std::vector<double>> rows_;
  std::vector<double> explicit_;

  void populate_explicit();
  friend RankingDist mixture_dist(const RankingDist&, const RankingDist&, double);
};

/// Sequential-choice ranking distribution induced by rewards: at each step
/// the probability of picking candidate j from the remaining set R is
/// exp(beta r_j) / sum_{l in R} exp(beta r_l), log-sum-exp stabilized.
RankingDist plackett_luce(std::span<const double> rewards, double beta);
inline RankingDist plackett_luce(const RewardVector& rewards, double beta) {
  return plackett_luce(std::span<const double>(rewards.values), beta);
}

/// Row-wise arithmetic mixture: gamma * teacher + (1 - gamma) * student per
/// conditional row, explicit form re-expanded from the mixed rows. Mixing at
/// the row level keeps the product form that the factored divergence needs.
RankingDist mixture_dist(const RankingDist& teacher, const RankingDist& student,
                         double gamma);

/// KL divergence by brute force over all n! permutations of the explicit
/// form. Throws DivergenceError where p > 0 but q == 0.
double kld_explicit(const RankingDist& p, const RankingDist& q);

/// KL divergence summed over sequential choices: for each remaining set S,
/// reach_p(S) * KL(p-row(S) || q-row(S)). Exactly equals kld_explicit for
/// distributions in this product form; no explicit form required.
double kld_factored(const RankingDist& p, const RankingDist& q);

/// 0.5 * kld_factored(p, q) + 0.5 * kld_factored(q, p). Symmetric, >= 0.
double jsd_preference(const RankingDist& p, const RankingDist& q);

/// |kld_explicit - kld_factored|; certifies the decomposition numerically.
/// Requires n <= kMaxExplicitN.
double decomposition_residual(const RankingDist& p, const RankingDist& q);

std::size_t factorial(int n);
/// Lexicographic rank of a permutation of 0..n-1.
std::size_t ranking_rank(std::span<const int> ranking);
std::vector<int> ranking_from_rank(int n, std::size_t rank);

/// Times a probability had to be floored at 1e-300 inside a log ratio.
std::uint64_t floor_activation_count();
void reset_floor_activation_count();

}  // namespace prefkd

#endif  // PREFKD_PREFERENCE_HPP_
