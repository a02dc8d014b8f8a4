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

#include "prefkd/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <doctest.h>

#include "prefkd/errors.hpp"
#include "test_util.hpp"

using namespace prefkd;
namespace tu = prefkd::testutil;

namespace {

PromptCase simple_case() {
  PromptCase c;
  c.prompt_id = "p0";
  c.prompt = {1, 2};
  c.responses = {Response{{3, 4}}, Response{{0}}};
  return c;
}

std::vector<PromptCase> random_corpus(std::mt19937_64& rng, int cases) {
  std::vector<PromptCase> out;
  for (int i = 0; i < cases; ++i) {
    PromptCase c;
    c.prompt_id = "case-" + std::to_string(i);
    const int plen = 1 + static_cast<int>(tu::uniform01(rng) * 3);
    for (int k = 0; k < plen; ++k) {
      c.prompt.push_back(static_cast<int>(tu::uniform01(rng) * 10));
    }
    const int n = 2 + static_cast<int>(tu::uniform01(rng) * 3);
    for (int r = 0; r < n; ++r) {
      Response resp;
      const int rlen = 1 + static_cast<int>(tu::uniform01(rng) * 5);
      for (int k = 0; k < rlen; ++k) {
        resp.tokens.push_back(static_cast<int>(tu::uniform01(rng) * 10));
      }
      c.responses.push_back(std::move(resp));
    }
    if (tu::uniform01(rng) < 0.7) {
      c.teacher_scores = tu::random_vector(rng, n, -3.0, 0.0);
    }
    if (tu::uniform01(rng) < 0.7) {
      std::vector<int> ranks(n);
      std::iota(ranks.begin(), ranks.end(), 1);
      for (int k = n - 1; k > 0; --k) {
        std::swap(ranks[k], ranks[rng() % (k + 1)]);
      }
      c.human_ranks = ranks;
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TEST_CASE("load a single valid record") {
  const auto dir = tu::scratch_dir("corpus_one");
  {
    std::ofstream out(dir / "one.jsonl");
    out << R"({"prompt_id":"a","prompt":[0,1],"responses":[[2],[3,4]]})" << "\n";
  }
  const auto cases = load_corpus(dir / "one.jsonl");
  REQUIRE(cases.size() == 1);
  CHECK(cases[0].prompt_id == "a");
  CHECK(cases[0].n() == 2);
  CHECK_FALSE(cases[0].teacher_scores.has_value());
}

TEST_CASE("invariant violations are named") {
  const auto dir = tu::scratch_dir("corpus_bad");
  {
    std::ofstream out(dir / "dup_ranks.jsonl");
    out << R"({"prompt_id":"bad1","prompt":[0],"responses":[[1],[2]],"human_ranks":[1,1]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(dir / "dup_ranks.jsonl"),
                       doctest::Contains("bad1"), ValidationError);

  {
    std::ofstream out(dir / "short_scores.jsonl");
    out << R"({"prompt_id":"bad2","prompt":[0],"responses":[[1],[2]],"teacher_scores":[0.5]})"
        << "\n";
  }
  CHECK_THROWS_AS(load_corpus(dir / "short_scores.jsonl"), ValidationError);

  {
    std::ofstream out(dir / "empty_resp.jsonl");
    out << R"({"prompt_id":"bad3","prompt":[0],"responses":[[],[2]]})" << "\n";
  }
  CHECK_THROWS_AS(load_corpus(dir / "empty_resp.jsonl"), ValidationError);

  {
    std::ofstream out(dir / "one_resp.jsonl");
    out << R"({"prompt_id":"bad4","prompt":[0],"responses":[[2]]})" << "\n";
  }
  CHECK_THROWS_AS(load_corpus(dir / "one_resp.jsonl"), ValidationError);
}

TEST_CASE("malformed line names the line number") {
  const auto dir = tu::scratch_dir("corpus_parse");
  {
    std::ofstream out(dir / "broken.jsonl");
    out << R"({"prompt_id":"ok","prompt":[0],"responses":[[1],[2]]})" << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(dir / "broken.jsonl"), doctest::Contains("line 2"),
                       ParseError);
}

TEST_CASE("save/load round-trips and is byte stable") {
  const auto dir = tu::scratch_dir("corpus_roundtrip");
  std::mt19937_64 rng(71);

  SUBCASE("empty corpus writes an empty file") {
    save_corpus(std::vector<PromptCase>{}, dir / "empty.jsonl");
    std::ifstream in(dir / "empty.jsonl", std::ios::binary | std::ios::ate);
    CHECK(in.tellg() == 0);
    CHECK(load_corpus(dir / "empty.jsonl").empty());
  }

  SUBCASE("one case, one line") {
    const std::vector<PromptCase> one = {simple_case()};
    save_corpus(one, dir / "one.jsonl");
    std::ifstream in(dir / "one.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1);
  }

  SUBCASE("20-case random corpus round-trips structurally") {
    const auto corpus = random_corpus(rng, 20);
    save_corpus(corpus, dir / "r20.jsonl");
    CHECK(load_corpus(dir / "r20.jsonl") == corpus);
  }

  SUBCASE("50-case round trip and byte stability") {
    const auto corpus = random_corpus(rng, 50);
    save_corpus(corpus, dir / "a.jsonl");
    save_corpus(corpus, dir / "b.jsonl");
    CHECK(load_corpus(dir / "a.jsonl") == corpus);
    std::ifstream a(dir / "a.jsonl", std::ios::binary);
    std::ifstream b(dir / "b.jsonl", std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }
}

TEST_CASE("max/min preference pair") {
  PromptCase c = simple_case();
  c.responses.push_back(Response{{5}});

  SUBCASE("direct argmax/argmin") {
    const std::vector<double> rewards = {0.1, 0.9, 0.5};
    const PreferencePair p = build_max_min_pair(c, rewards);
    CHECK(p.winner_idx == 1);
    CHECK(p.loser_idx == 0);
    CHECK(p.prompt_id == "p0");
  }
  SUBCASE("lowest-index tie break") {
    const std::vector<double> rewards = {0.9, 0.9, 0.1};
    const PreferencePair p = build_max_min_pair(c, rewards);
    CHECK(p.winner_idx == 0);
    CHECK(p.loser_idx == 2);
  }
  SUBCASE("all-equal rewards are degenerate") {
    PromptCase two = simple_case();
    CHECK_THROWS_AS(build_max_min_pair(two, std::vector<double>{0.5, 0.5}),
                    DegeneratePairError);
  }
  SUBCASE("invariant under shift and positive scale") {
    std::mt19937_64 rng(73);
    for (int k = 0; k < 50; ++k) {
      const auto rewards = tu::random_vector(rng, 3, -2.0, 2.0);
      const double shift = tu::uniform(rng, -5.0, 5.0);
      const double scale = tu::uniform(rng, 0.1, 10.0);
      std::vector<double> transformed(rewards);
      for (double& v : transformed) v = v * scale + shift;
      const PreferencePair a = build_max_min_pair(c, rewards);
      const PreferencePair b = build_max_min_pair(c, transformed);
      CHECK(a.winner_idx == b.winner_idx);
      CHECK(a.loser_idx == b.loser_idx);
    }
  }
}

TEST_CASE("ranks_from_scores") {
  CHECK(ranks_from_scores(std::vector<double>{0.2, 0.8}) == std::vector<int>{2, 1});
  CHECK(ranks_from_scores(std::vector<double>{0.5, 0.5, 0.1}) ==
        std::vector<int>{1, 2, 3});
  CHECK_THROWS_AS(ranks_from_scores(std::vector<double>{}), DomainError);

  // Comparison-sort oracle on random vectors.
  std::mt19937_64 rng(79);
  for (int k = 0; k < 50; ++k) {
    const auto scores = tu::random_vector(rng, 6, -1.0, 1.0);
    const auto ranks = ranks_from_scores(scores);

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      CHECK(ranks[order[pos]] == static_cast<int>(pos) + 1);
    }

    // Permutation property and non-increasing score order.
    std::vector<int> sorted_ranks(ranks);
    std::sort(sorted_ranks.begin(), sorted_ranks.end());
    for (std::size_t i = 0; i < sorted_ranks.size(); ++i) {
      CHECK(sorted_ranks[i] == static_cast<int>(i) + 1);
    }
    std::vector<double> by_rank(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) by_rank[ranks[i] - 1] = scores[i];
    CHECK(std::is_sorted(by_rank.rbegin(), by_rank.rend()));
  }
}

TEST_CASE("synthetic corpus generation") {
  const LogitTable teacher = make_random_model(8, 1, 1.5, 101);
  GenConfig config;
  config.num_cases = 24;
  config.vocab_size = 8;
  config.order = 1;
  config.n_responses = 4;
  config.prompt_len = 3;
  config.max_len = 6;

  SUBCASE("deterministic per seed") {
    const auto a = generate_synthetic_corpus(teacher, config, 7);
    const auto b = generate_synthetic_corpus(teacher, config, 7);
    CHECK(a == b);
  }
  SUBCASE("n responses per case and token range") {
    const auto corpus = generate_synthetic_corpus(teacher, config, 7);
    CHECK(corpus.size() == 24);
    for (const PromptCase& c : corpus) {
      CHECK(c.n() == 4);
      for (int t : c.prompt) CHECK(t < 8);
      for (const Response& r : c.responses) {
        for (int t : r.tokens) CHECK(t < 8);
      }
      REQUIRE(c.teacher_scores.has_value());
      REQUIRE(c.human_ranks.has_value());
    }
  }
  SUBCASE("invalid sizes rejected") {
    GenConfig bad = config;
    bad.vocab_size = 1;
    CHECK_THROWS_AS(generate_synthetic_corpus(teacher, bad, 7), ConfigError);
    bad = config;
    bad.n_responses = 1;
    CHECK_THROWS_AS(generate_synthetic_corpus(teacher, bad, 7), ConfigError);
  }
  SUBCASE("minimum reward gap is honored") {
    GenConfig gapped = config;
    gapped.num_cases = 8;
    gapped.min_reward_gap = 0.1;
    const auto corpus = generate_synthetic_corpus(teacher, gapped, 7);
    for (const PromptCase& c : corpus) {
      std::vector<double> sorted(*c.teacher_scores);
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 1; i < sorted.size(); ++i) {
        CHECK(sorted[i] - sorted[i - 1] >= 0.1);
      }
    }
  }
}

TEST_CASE("corpus round-trip preserves awkward doubles") {
  const auto dir = tu::scratch_dir("corpus_doubles");
  PromptCase c;
  c.prompt_id = "doubles";
  c.prompt = {0};
  c.responses = {Response{{1}}, Response{{2}}};
  c.teacher_scores = std::vector<double>{0.1 + 0.2, -1.0 / 3.0};
  const std::vector<PromptCase> corpus = {c};
  save_corpus(corpus, dir / "c.jsonl");
  const auto back = load_corpus(dir / "c.jsonl");
  REQUIRE(back.size() == 1);
  CHECK((*back[0].teacher_scores)[0] == 0.1 + 0.2);
  CHECK((*back[0].teacher_scores)[1] == -1.0 / 3.0);
}
