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
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "prefkd/errors.hpp"

namespace prefkd {

namespace {

using nlohmann::json;

json case_to_json(const PromptCase& c) {
  json j;
  j["prompt_id"] = c.prompt_id;
  j["prompt"] = c.prompt;
  json resp = json::array();
  for (const Response& r : c.responses) resp.push_back(r.tokens);
  j["responses"] = std::move(resp);
  if (c.teacher_scores) j["teacher_scores"] = *c.teacher_scores;
  if (c.human_ranks) j["human_ranks"] = *c.human_ranks;
  return j;
}

PromptCase case_from_json(const json& j) {
  PromptCase c;
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.prompt = j.at("prompt").get<std::vector<int>>();
  for (const auto& tokens : j.at("responses")) {
    c.responses.push_back(Response{tokens.get<std::vector<int>>()});
  }
  if (j.contains("teacher_scores") && !j["teacher_scores"].is_null()) {
    c.teacher_scores = j["teacher_scores"].get<std::vector<double>>();
  }
  if (j.contains("human_ranks") && !j["human_ranks"].is_null()) {
    c.human_ranks = j["human_ranks"].get<std::vector<int>>();
  }
  return c;
}

bool is_permutation_of_1_to_n(const std::vector<int>& ranks) {
  std::vector<bool> seen(ranks.size(), false);
  for (int r : ranks) {
    if (r < 1 || r > static_cast<int>(ranks.size()) || seen[r - 1]) return false;
    seen[r - 1] = true;
  }
  return true;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double avg_logprob(const LogitTable& model, std::span<const int> prompt,
                   const Response& r) {
  return sequence_logprob(model, prompt, r) / r.length();
}

}  // namespace

void PromptCase::validate() const {
  auto fail = [this](const std::string& why) {
    throw ValidationError("case '" + prompt_id + "': " + why);
  };
  if (prompt_id.empty()) throw ValidationError("case with empty prompt_id");
  if (responses.size() < 2) fail("needs at least 2 responses");
  for (int t : prompt) {
    if (t < 0) fail("negative prompt token id");
  }
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (responses[i].tokens.empty()) {
      fail("response " + std::to_string(i) + " is empty");
    }
    for (int t : responses[i].tokens) {
      if (t < 0) fail("negative token id in response " + std::to_string(i));
    }
  }
  if (teacher_scores) {
    if (teacher_scores->size() != responses.size()) {
      fail("teacher_scores length " + std::to_string(teacher_scores->size()) +
           " != n = " + std::to_string(responses.size()));
    }
    for (double s : *teacher_scores) {
      if (!std::isfinite(s)) fail("non-finite teacher score");
    }
  }
  if (human_ranks) {
    if (human_ranks->size() != responses.size() ||
        !is_permutation_of_1_to_n(*human_ranks)) {
      fail("human_ranks is not a permutation of 1.." +
           std::to_string(responses.size()));
    }
  }
}

std::vector<PromptCase> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::vector<PromptCase> cases;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    PromptCase c;
    try {
      c = case_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    c.validate();
    cases.push_back(std::move(c));
  }
  return cases;
}

void save_corpus(std::span<const PromptCase> cases,
                 const std::filesystem::path& path) {
  for (const PromptCase& c : cases) c.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const PromptCase& c : cases) {
    out << case_to_json(c).dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PreferencePair build_max_min_pair(const PromptCase& c,
                                  std::span<const double> rewards,
                                  PairSource source) {
  if (rewards.size() != static_cast<std::size_t>(c.n()) || rewards.size() < 2) {
    throw DomainError("rewards length " + std::to_string(rewards.size()) +
                      " does not match case n = " + std::to_string(c.n()));
  }
  for (double r : rewards) {
    if (!std::isfinite(r)) throw DomainError("non-finite reward");
  }
  int best = 0, worst = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best]) best = static_cast<int>(i);
    if (rewards[i] < rewards[worst]) worst = static_cast<int>(i);
  }
  if (rewards[best] == rewards[worst]) {
    throw DegeneratePairError("case '" + c.prompt_id +
                              "': all rewards equal, no strict preference");
  }
  return PreferencePair{c.prompt_id, best, worst, source};
}

std::vector<int> ranks_from_scores(std::span<const double> scores) {
  if (scores.empty()) throw DomainError("ranks_from_scores: empty input");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("ranks_from_scores: non-finite score");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> ranks(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    ranks[order[pos]] = static_cast<int>(pos) + 1;
  }
  return ranks;
}

void GenConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("gen: vocab_size must be >= 2");
  if (order < 0) throw ConfigError("gen: order must be >= 0");
  if (n_responses < 2) throw ConfigError("gen: n_responses must be >= 2");
  if (num_cases < 1) throw ConfigError("gen: num_cases must be >= 1");
  if (prompt_len < 1) throw ConfigError("gen: prompt_len must be >= 1");
  if (max_len < 1) throw ConfigError("gen: max_len must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("gen: temperature must be > 0");
  if (min_reward_gap < 0.0) throw ConfigError("gen: min_reward_gap must be >= 0");
}

std::vector<PromptCase> generate_synthetic_corpus(const LogitTable& teacher,
                                                  const GenConfig& config,
                                                  std::uint64_t seed) {
  config.validate();
  teacher.validate();
  if (teacher.vocab_size != config.vocab_size || teacher.order != config.order) {
    throw ConfigError("gen: teacher shape does not match config");
  }

  std::mt19937_64 rng(seed);
  std::vector<PromptCase> cases;
  cases.reserve(config.num_cases);
  for (int i = 0; i < config.num_cases; ++i) {
    PromptCase c;
    c.prompt_id = "case-" + std::to_string(i);
    c.prompt.resize(config.prompt_len);
    // eos excluded from prompts; all other ids allowed.
    for (int& t : c.prompt) {
      t = static_cast<int>(uniform01(rng) * (config.vocab_size - 1));
    }

    constexpr int kMaxTries = 2000;
    std::vector<double> scores;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxTries) {
        throw ConfigError("gen: could not satisfy min_reward_gap=" +
                          std::to_string(config.min_reward_gap) + " for '" +
                          c.prompt_id + "' after " + std::to_string(kMaxTries) +
                          " tries");
      }
      c.responses = sample_responses(teacher, c.prompt, config.n_responses,
                                     config.max_len, config.temperature, rng());
      scores.clear();
      for (const Response& r : c.responses) {
        scores.push_back(avg_logprob(teacher, c.prompt, r));
      }
      if (config.min_reward_gap <= 0.0) break;
      std::vector<double> sorted(scores);
      std::sort(sorted.begin(), sorted.end());
      bool ok = true;
      for (std::size_t k = 1; k < sorted.size(); ++k) {
        if (sorted[k] - sorted[k - 1] < config.min_reward_gap) ok = false;
      }
      if (ok) break;
    }

    if (config.with_teacher_scores) c.teacher_scores = scores;
    if (config.with_human_ranks) c.human_ranks = ranks_from_scores(scores);
    c.validate();
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace prefkd
