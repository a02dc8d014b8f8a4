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

#include "prefkd/toylm.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <doctest.h>

#include "prefkd/errors.hpp"
#include "test_util.hpp"

using namespace prefkd;
namespace tu = prefkd::testutil;

namespace {

// Independent per-position softmax scoring used as the oracle.
double oracle_logprob(const LogitTable& m, std::vector<int> history,
                      const std::vector<int>& tokens) {
  double total = 0.0;
  for (int tok : tokens) {
    const std::size_t ctx = m.context_index(history);
    auto row = m.row(ctx);
    double z = 0.0;
    for (double v : row) z += std::exp(v);
    total += row[tok] - std::log(z);
    history.push_back(tok);
  }
  return total;
}

}  // namespace

TEST_CASE("uniform model sequence logprob") {
  const LogitTable m = make_uniform_model(4, 1);
  const std::vector<int> prompt = {0};
  CHECK(sequence_logprob(m, prompt, Response{{1, 2}}) ==
        doctest::Approx(2.0 * std::log(0.25)).epsilon(1e-9));
  CHECK(sequence_logprob(m, prompt, Response{{1, 2}}) ==
        doctest::Approx(-2.772589).epsilon(1e-6));
}

TEST_CASE("near-deterministic model drives logprob to zero from below") {
  LogitTable m = make_uniform_model(4, 0);
  m.row(0)[2] = 60.0;  // huge margin for token 2
  const double lp = sequence_logprob(m, {}, Response{{2}});
  CHECK(lp <= 0.0);
  CHECK(lp > -1e-20);
}

TEST_CASE("sequence logprob matches the per-position enumeration oracle") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const int vocab = 3 + static_cast<int>(tu::uniform01(rng) * 5);
    const int order = static_cast<int>(tu::uniform01(rng) * 3);  // 0..2
    const LogitTable m = make_random_model(vocab, order, 2.0, rng());
    std::vector<int> prompt = {static_cast<int>(tu::uniform01(rng) * vocab)};
    std::vector<int> tokens;
    for (int i = 0; i < 3; ++i) {
      tokens.push_back(static_cast<int>(tu::uniform01(rng) * vocab));
    }
    CHECK(sequence_logprob(m, prompt, Response{tokens}) ==
          doctest::Approx(oracle_logprob(m, prompt, tokens)).epsilon(1e-12));
  }
}

TEST_CASE("token domain errors") {
  const LogitTable m = make_uniform_model(4, 1);
  CHECK_THROWS_AS(sequence_logprob(m, {}, Response{{4}}), DomainError);
  CHECK_THROWS_AS(sequence_logprob(m, std::vector<int>{7}, Response{{0}}), DomainError);
  CHECK_THROWS_AS(sequence_logprob(m, {}, Response{{-1}}), DomainError);
  CHECK_THROWS_AS(sequence_logprob(m, {}, Response{{}}), DomainError);
}

TEST_CASE("softmax rows normalize") {
  std::mt19937_64 rng(11);
  const LogitTable m = make_random_model(6, 1, 3.0, rng());
  for (std::size_t c = 0; c < m.num_contexts(); ++c) {
    auto row = m.row(c);
    double hi = row[0];
    for (double v : row) hi = std::max(hi, v);
    double z = 0.0;
    for (double v : row) z += std::exp(v - hi);
    double total = 0.0;
    for (double v : row) total += std::exp(v - hi) / z;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("order-0 model is additive over concatenation") {
  std::mt19937_64 rng(13);
  const LogitTable m = make_random_model(5, 0, 2.0, rng());
  const Response a{{1, 2}};
  const Response b{{3, 0, 4}};
  Response ab;
  ab.tokens = a.tokens;
  ab.tokens.insert(ab.tokens.end(), b.tokens.begin(), b.tokens.end());
  CHECK(sequence_logprob(m, {}, ab) ==
        doctest::Approx(sequence_logprob(m, {}, a) + sequence_logprob(m, {}, b))
            .epsilon(1e-12));
}

TEST_CASE("sampling: one-hot model repeats itself") {
  LogitTable m = make_uniform_model(4, 0);
  m.row(0)[1] = 80.0;
  const auto responses = sample_responses(m, {}, 5, 3, 1.0, 99);
  for (const Response& r : responses) {
    CHECK(r.tokens == std::vector<int>{1, 1, 1});
  }
}

TEST_CASE("sampling determinism per seed") {
  const LogitTable m = make_random_model(6, 1, 1.0, 17);
  const std::vector<int> prompt = {2, 3};
  const auto a = sample_responses(m, prompt, 4, 8, 1.0, 123);
  const auto b = sample_responses(m, prompt, 4, 8, 1.0, 123);
  CHECK(a == b);
  const auto c = sample_responses(m, prompt, 4, 8, 1.0, 124);
  CHECK(a != c);
}

TEST_CASE("sampling frequencies concentrate for the uniform model") {
  const int vocab = 4;
  const LogitTable m = make_uniform_model(vocab, 0);
  const int num_draws = 100000;
  const auto responses = sample_responses(m, {}, num_draws, 1, 1.0, 7);
  std::map<int, int> counts;
  for (const Response& r : responses) {
    REQUIRE(r.length() == 1);
    counts[r.tokens[0]] += 1;
  }
  const double p = 1.0 / vocab;
  const double sigma = std::sqrt(num_draws * p * (1 - p));
  for (int v = 0; v < vocab; ++v) {
    CHECK(std::abs(counts[v] - num_draws * p) < 3.0 * sigma);
  }
}

TEST_CASE("responses terminate at eos or max_len and are never empty") {
  const LogitTable m = make_random_model(5, 1, 1.0, 31);
  const auto responses = sample_responses(m, std::vector<int>{0}, 50, 6, 1.0, 5);
  for (const Response& r : responses) {
    CHECK(r.length() >= 1);
    CHECK(r.length() <= 6);
    for (std::size_t i = 0; i + 1 < r.tokens.size(); ++i) {
      CHECK(r.tokens[i] != m.eos_id());
    }
  }
}

TEST_CASE("temperature scaling equals logit scaling") {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 20; ++k) {
    const double temp = tu::uniform(rng, 0.25, 4.0);
    LogitTable m = make_random_model(5, 1, 2.0, rng());
    LogitTable scaled = m;
    for (double& v : scaled.data) v /= temp;
    const std::vector<int> history = {1, 4};
    const auto a = next_token_distribution(m, history, temp);
    const auto b = next_token_distribution(scaled, history, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("non-positive temperature rejected") {
  const LogitTable m = make_uniform_model(4, 0);
  CHECK_THROWS_AS(sample_responses(m, {}, 1, 3, 0.0, 1), DomainError);
  CHECK_THROWS_AS(sample_responses(m, {}, 1, 3, -1.0, 1), DomainError);
  CHECK_THROWS_AS(next_token_distribution(m, {}, 0.0), DomainError);
}

TEST_CASE("gradient rows sum to zero over the vocabulary") {
  std::mt19937_64 rng(53);
  const LogitTable m = make_random_model(5, 1, 2.0, rng());
  const LogitTable g = logprob_gradient(m, std::vector<int>{0, 1}, Response{{2, 3, 4, 0}});
  for (std::size_t c = 0; c < g.num_contexts(); ++c) {
    double row_sum = 0.0;
    for (double v : g.row(c)) row_sum += v;
    CHECK(row_sum == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("single-position gradient is indicator minus softmax") {
  std::mt19937_64 rng(59);
  const LogitTable m = make_random_model(4, 0, 1.5, rng());
  const LogitTable g = logprob_gradient(m, {}, Response{{2}});
  auto row = m.row(0);
  double z = 0.0;
  for (double v : row) z += std::exp(v);
  for (int v = 0; v < 4; ++v) {
    const double want = (v == 2 ? 1.0 : 0.0) - std::exp(row[v]) / z;
    CHECK(g.row(0)[v] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(61);
  double worst = 0.0;
  for (int k = 0; k < 120; ++k) {
    const int vocab = 3 + static_cast<int>(tu::uniform01(rng) * 4);
    const int order = static_cast<int>(tu::uniform01(rng) * 2);
    const LogitTable m = make_random_model(vocab, order, 1.5, rng());
    std::vector<int> prompt = {static_cast<int>(tu::uniform01(rng) * vocab)};
    std::vector<int> tokens;
    const int len = k == 0 ? 5 : 2 + static_cast<int>(tu::uniform01(rng) * 4);
    for (int i = 0; i < len; ++i) {
      tokens.push_back(static_cast<int>(tu::uniform01(rng) * vocab));
    }
    const Response resp{tokens};
    const LogitTable analytic = logprob_gradient(m, prompt, resp);
    const auto fd = tu::fd_gradient(m.data, [&](std::span<const double> x) {
      LogitTable probe = m;
      probe.data.assign(x.begin(), x.end());
      return sequence_logprob(probe, prompt, resp);
    });
    const double err = tu::max_rel_error(analytic.data, fd);
    worst = std::max(worst, err);
    if (k == 0) CHECK(err < 1e-6);  // 5-token spot case
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("checkpoint round-trip is exact") {
  const auto dir = tu::scratch_dir("toylm");
  std::mt19937_64 rng(67);
  const LogitTable m = make_random_model(12, 1, 2.5, rng());
  save_model(m, dir / "model.toylm");
  const LogitTable back = load_model(dir / "model.toylm");
  CHECK(back == m);
}

TEST_CASE("checkpoint loader rejects junk") {
  const auto dir = tu::scratch_dir("toylm_bad");
  {
    std::ofstream out(dir / "bad.toylm");
    out << "nope 3\n";
  }
  CHECK_THROWS_AS(load_model(dir / "bad.toylm"), ParseError);
  CHECK_THROWS_AS(load_model(dir / "missing.toylm"), IoError);
  {
    std::ofstream out(dir / "trunc.toylm");
    out << "toylm 1\n4 1\n0.5 0.5\n";
  }
  CHECK_THROWS_AS(load_model(dir / "trunc.toylm"), ParseError);
}

TEST_CASE("context table covers pad-initialized contexts") {
  const LogitTable m = make_uniform_model(4, 2);
  CHECK(m.num_contexts() == 25);  // (V+1)^2
  CHECK(m.context_index(std::vector<int>{1}) != m.context_index(std::vector<int>{2}));
  // Only the last `order` tokens matter.
  CHECK(m.context_index(std::vector<int>{3, 1}) ==
        m.context_index(std::vector<int>{0, 3, 1}));
}
