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

#include "prefkd/preference.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "prefkd/errors.hpp"

namespace prefkd {

namespace {

std::atomic<std::uint64_t> g_floor_activations{0};

constexpr double kProbFloor = 1e-300;

// log(p / q) with q floored at 1e-300; exact zeros are the caller's problem.
double log_ratio(double p, double q) {
  if (q < kProbFloor) {
    g_floor_activations.fetch_add(1, std::memory_order_relaxed);
    q = kProbFloor;
  }
  if (p < kProbFloor) {
    g_floor_activations.fetch_add(1, std::memory_order_relaxed);
    p = kProbFloor;
  }
  return std::log(p) - std::log(q);
}

int popcount32(std::uint32_t mask) { return std::popcount(mask); }

void check_same_n(const RankingDist& p, const RankingDist& q) {
  if (p.n() != q.n()) {
    throw DomainError("ranking distributions disagree on n: " +
                      std::to_string(p.n()) + " vs " + std::to_string(q.n()));
  }
}

// Masks with popcount >= 2, grouped so larger sets come first.
std::vector<std::uint32_t> masks_by_descending_size(int n) {
  std::vector<std::uint32_t> masks;
  const std::uint32_t full = (1u << n) - 1u;
  for (std::uint32_t m = 0; m <= full; ++m) {
    if (popcount32(m) >= 2) masks.push_back(m);
  }
  std::sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    const int pa = std::popcount(a), pb = std::popcount(b);
    return pa != pb ? pa > pb : a < b;
  });
  return masks;
}

}  // namespace

std::size_t factorial(int n) {
  std::size_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::size_t>(i);
  return f;
}

std::size_t ranking_rank(std::span<const int> ranking) {
  const int n = static_cast<int>(ranking.size());
  std::size_t rank = 0;
  for (int i = 0; i < n; ++i) {
    int smaller_later = 0;
    for (int j = i + 1; j < n; ++j) {
      if (ranking[j] < ranking[i]) ++smaller_later;
    }
    rank += static_cast<std::size_t>(smaller_later) * factorial(n - 1 - i);
  }
  return rank;
}

std::vector<int> ranking_from_rank(int n, std::size_t rank) {
  if (rank >= factorial(n)) {
    throw DomainError("permutation rank out of range");
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> out;
  out.reserve(n);
  for (int i = n - 1; i >= 0; --i) {
    const std::size_t f = factorial(i);
    const std::size_t k = rank / f;
    rank %= f;
    out.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

RankingDist RankingDist::from_rows(int n, std::vector<std::vector<double>> rows) {
  if (n < 2) throw DomainError("ranking distribution needs n >= 2");
  if (n > kMaxFactoredN) {
    throw CapacityError("factored form capped at n = " +
                        std::to_string(kMaxFactoredN) + ", got " + std::to_string(n));
  }
  const std::size_t want = std::size_t{1} << n;
  if (rows.size() != want) {
    throw ValidationError("expected " + std::to_string(want) + " rows, got " +
                          std::to_string(rows.size()));
  }
  for (std::uint32_t mask = 0; mask < want; ++mask) {
    const int size = popcount32(mask);
    if (size < 2) continue;
    const auto& row = rows[mask];
    if (row.size() != static_cast<std::size_t>(size)) {
      throw ValidationError("row for mask " + std::to_string(mask) +
                            " has wrong arity");
    }
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("factor row has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("factor row for mask " + std::to_string(mask) +
                            " sums to " + std::to_string(sum));
    }
  }
  RankingDist d;
  d.n_ = n;
  d.rows_ = std::move(rows);
  d.populate_explicit();
  return d;
}

const std::vector<double>& RankingDist::row(std::uint32_t mask) const {
  if (mask >= rows_.size() || popcount32(mask) < 2) {
    throw DomainError("no factor row for mask " + std::to_string(mask));
  }
  return rows_[mask];
}

const std::vector<double>& RankingDist::explicit_probs() const {
  if (explicit_.empty()) {
    throw CapacityError("explicit form only materialized for n <= " +
                        std::to_string(kMaxExplicitN) + " (n = " +
                        std::to_string(n_) + ")");
  }
  return explicit_;
}

double RankingDist::ranking_prob(std::span<const int> ranking) const {
  if (static_cast<int>(ranking.size()) != n_) {
    throw DomainError("ranking length != n");
  }
  std::uint32_t mask = (1u << n_) - 1u;
  double prob = 1.0;
  for (int step = 0; step < n_ - 1; ++step) {
    const int chosen = ranking[step];
    if (chosen < 0 || chosen >= n_ || !((mask >> chosen) & 1u)) {
      throw DomainError("ranking is not a permutation of 0..n-1");
    }
    const auto& r = rows_[mask];
    // Position of `chosen` among the set bits below it.
    const int pos = popcount32(mask & ((1u << chosen) - 1u));
    prob *= r[pos];
    mask &= ~(1u << chosen);
  }
  const int last = ranking[n_ - 1];
  if (last < 0 || last >= n_ || mask != (1u << last)) {
    throw DomainError("ranking is not a permutation of 0..n-1");
  }
  return prob;
}

std::vector<double> RankingDist::reach_probabilities() const {
  std::vector<double> reach(std::size_t{1} << n_, 0.0);
  const std::uint32_t full = (1u << n_) - 1u;
  reach[full] = 1.0;
  for (std::uint32_t mask : masks_by_descending_size(n_)) {
    const double r = reach[mask];
    if (r == 0.0) continue;
    const auto& row = rows_[mask];
    int pos = 0;
    for (int v = 0; v < n_; ++v) {
      if (!((mask >> v) & 1u)) continue;
      reach[mask & ~(1u << v)] += r * row[pos];
      ++pos;
    }
  }
  return reach;
}

void RankingDist::populate_explicit() {
  if (n_ > kMaxExplicitN) return;
  explicit_.resize(factorial(n_));
  std::vector<int> perm(n_);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t k = 0;
  do {
    explicit_[k++] = ranking_prob(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

RankingDist plackett_luce(std::span<const double> rewards, double beta) {
  const int n = static_cast<int>(rewards.size());
  if (n < 2) throw DomainError("plackett_luce needs n >= 2 rewards");
  if (!(beta > 0.0)) throw DomainError("plackett_luce: beta must be > 0");
  if (n > RankingDist::kMaxFactoredN) {
    throw CapacityError("plackett_luce capped at n = " +
                        std::to_string(RankingDist::kMaxFactoredN));
  }
  std::vector<double> logw(rewards.size());
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(rewards[i])) {
      throw DomainError("plackett_luce: non-finite reward");
    }
    logw[i] = beta * rewards[i];
  }

  std::vector<std::vector<double>> rows(std::size_t{1} << n);
  for (std::uint32_t mask = 0; mask < rows.size(); ++mask) {
    const int size = popcount32(mask);
    if (size < 2) continue;
    double hi = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < n; ++v) {
      if ((mask >> v) & 1u) hi = std::max(hi, logw[v]);
    }
    std::vector<double> row;
    row.reserve(size);
    double sum = 0.0;
    for (int v = 0; v < n; ++v) {
      if (!((mask >> v) & 1u)) continue;
      const double e = std::exp(logw[v] - hi);
      row.push_back(e);
      sum += e;
    }
    for (double& v : row) v /= sum;
    rows[mask] = std::move(row);
  }
  return RankingDist::from_rows(n, std::move(rows));
}

RankingDist mixture_dist(const RankingDist& teacher, const RankingDist& student,
                         double gamma) {
  check_same_n(teacher, student);
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw DomainError("mixture_dist: gamma must lie in [0, 1]");
  }
  RankingDist mix;
  mix.n_ = teacher.n_;
  mix.rows_.resize(teacher.rows_.size());
  for (std::uint32_t mask = 0; mask < teacher.rows_.size(); ++mask) {
    if (popcount32(mask) < 2) continue;
    const auto& t = teacher.rows_[mask];
    const auto& s = student.rows_[mask];
    std::vector<double> m(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      m[i] = gamma * t[i] + (1.0 - gamma) * s[i];
    }
    mix.rows_[mask] = std::move(m);
  }
  mix.populate_explicit();
  return mix;
}

double kld_explicit(const RankingDist& p, const RankingDist& q) {
  check_same_n(p, q);
  const auto& pp = p.explicit_probs();
  const auto& qq = q.explicit_probs();
  double kl = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    if (pp[i] == 0.0) continue;
    if (qq[i] == 0.0) {
      throw DivergenceError("absolute continuity violated at permutation " +
                            std::to_string(i));
    }
    kl += pp[i] * log_ratio(pp[i], qq[i]);
  }
  return kl;
}

double kld_factored(const RankingDist& p, const RankingDist& q) {
  check_same_n(p, q);
  const std::vector<double> reach = p.reach_probabilities();
  double kl = 0.0;
  for (std::uint32_t mask = 0; mask < reach.size(); ++mask) {
    if (popcount32(mask) < 2 || reach[mask] == 0.0) continue;
    const auto& pr = p.row(mask);
    const auto& qr = q.row(mask);
    double local = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) {
      if (pr[i] == 0.0) continue;
      if (qr[i] == 0.0) {
        throw DivergenceError("absolute continuity violated in factor row " +
                              std::to_string(mask));
      }
      local += pr[i] * log_ratio(pr[i], qr[i]);
    }
    kl += reach[mask] * local;
  }
  return kl;
}

double jsd_preference(const RankingDist& p, const RankingDist& q) {
  return 0.5 * kld_factored(p, q) + 0.5 * kld_factored(q, p);
}

double decomposition_residual(const RankingDist& p, const RankingDist& q) {
  return std::abs(kld_explicit(p, q) - kld_factored(p, q));
}

std::uint64_t floor_activation_count() {
  return g_floor_activations.load(std::memory_order_relaxed);
}

void reset_floor_activation_count() {
  g_floor_activations.store(0, std::memory_order_relaxed);
}

}  // namespace prefkd
