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

#ifndef PREFKD_TOYLM_HPP_
#define PREFKD_TOYLM_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace prefkd {

/// One candidate completion: a non-empty token-id sequence.
struct Response {
  std::vector<int> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Response&) const = default;
};

/// Dense (context, token) table of an exact order-m autoregressive model over
/// a vocabulary of `vocab_size` token ids. The same shape serves as the
/// model's parameters and as gradient accumulators.
///
/// Reserved ids: eos = vocab_size - 1 (a normal, emittable token), and
/// pad = vocab_size, used only to left-pad contexts shorter than `order`.
/// Context symbols therefore range over [0, vocab_size], so the table has
/// (vocab_size + 1)^order rows; emissions range over [0, vocab_size).
struct LogitTable {
  int vocab_size = 0;
  int order = 0;
  std::vector<double> data;  // num_contexts() x vocab_size, row-major

  int pad_id() const { return vocab_size; }
  int eos_id() const { return vocab_size - 1; }
  std::size_t num_contexts() const;
  std::span<const double> row(std::size_t ctx) const;
  std::span<double> row(std::size_t ctx);
  /// Context index for the last `order` entries of `history`, left-padded
  /// with pad_id(). Older positions are higher digits.
  std::size_t context_index(std::span<const int> history) const;
  /// Checks finiteness and dimensional consistency. Throws ValidationError.
  void validate() const;

  bool operator==(const LogitTable&) const = default;
};

LogitTable make_zero_table(int vocab_size, int order);
LogitTable make_uniform_model(int vocab_size, int order);
/// Logits drawn i.i.d. uniform from [-scale, scale]; deterministic per seed.
LogitTable make_random_model(int vocab_size, int order, double scale,
                             std::uint64_t seed);

/// Exact log p(response | prompt): sum over response positions of
/// log softmax(row(ctx_t))[y_t], log-sum-exp stabilized. Always <= 0.
double sequence_logprob(const LogitTable& model, std::span<const int> prompt,
                        const Response& response);

/// d log p(response | prompt) / d logits. For every visited context row the
/// entries are indicator(y_t = v) - softmax(row)[v], summed over positions;
/// unvisited rows stay zero. Each visited row sums to zero across tokens.
LogitTable logprob_gradient(const LogitTable& model, std::span<const int> prompt,
                            const Response& response);

/// Exact next-token distribution after `history` with logits scaled by
/// 1/temperature. Throws DomainError for temperature <= 0.
std::vector<double> next_token_distribution(const LogitTable& model,
                                            std::span<const int> history,
                                            double temperature);

/// Ancestral sampling. Each response ends with eos or runs to max_len
/// (so it is never empty). Deterministic for a fixed seed, independent of
/// platform (inverse-CDF draws from a mt19937_64 stream).
std::vector<Response> sample_responses(const LogitTable& model,
                                       std::span<const int> prompt, int n,
                                       int max_len, double temperature,
                                       std::uint64_t seed);

/// Checkpoint: "toylm 1" magic line, "V m" header, then one row of logits per
/// context in round-trippable decimal. load(save(x)) == x exactly.
void save_model(const LogitTable& model, const std::filesystem::path& path);
LogitTable load_model(const std::filesystem::path& path);

/// SplitMix64 step; used to derive independent per-case sampling seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace prefkd

#endif  // PREFKD_TOYLM_HPP_
