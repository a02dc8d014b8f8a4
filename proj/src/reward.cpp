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

#include "prefkd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "prefkd/errors.hpp"

namespace prefkd {

namespace {

void check_same_shape(const LogitTable& a, const LogitTable& b) {
  if (a.vocab_size != b.vocab_size || a.order != b.order) {
    throw DomainError("models disagree on (V, m): (" +
                      std::to_string(a.vocab_size) + "," + std::to_string(a.order) +
                      ") vs (" + std::to_string(b.vocab_size) + "," +
                      std::to_string(b.order) + ")");
  }
}

std::vector<double> softmax(std::span<const double> x) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : x) hi = std::max(hi, v);
  std::vector<double> p(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = std::exp(x[i] - hi);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

double pad_reward(const LogitTable& model, std::span<const int> prompt,
                  const Response& response) {
  return sequence_logprob(model, prompt, response) / response.length();
}

double dpo_reward(const LogitTable& current, const LogitTable& reference,
                  std::span<const int> prompt, const Response& response) {
  check_same_shape(current, reference);
  return sequence_logprob(current, prompt, response) -
         sequence_logprob(reference, prompt, response);
}

double minillm_reward(const LogitTable& teacher, const LogitTable& student,
                      std::span<const int> prompt, const Response& response) {
  check_same_shape(teacher, student);
  return sequence_logprob(teacher, prompt, response) -
         sequence_logprob(student, prompt, response);
}

RewardVector pad_rewards_for_case(const LogitTable& model, const PromptCase& c) {
  RewardVector rv;
  rv.prompt_id = c.prompt_id;
  rv.scheme = RewardScheme::pad_avg_loglik;
  rv.values.reserve(c.responses.size());
  for (const Response& r : c.responses) {
    rv.values.push_back(pad_reward(model, c.prompt, r));
  }
  return rv;
}

std::vector<double> UniformJudge::mcq(const PromptCase& c) const {
  return std::vector<double>(c.responses.size(), 1.0 / c.responses.size());
}

ScoreTableJudge ScoreTableJudge::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open judge table: " + path.string());
  std::map<std::pair<std::string, int>, double> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      table[{j.at("prompt_id").get<std::string>(),
             j.at("response_index").get<int>()}] = j.at("score").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("judge table line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return ScoreTableJudge(std::move(table));
}

double ScoreTableJudge::lookup(const std::string& prompt_id, int index) const {
  auto it = table_.find({prompt_id, index});
  if (it == table_.end()) {
    throw ValidationError("judge table has no score for ('" + prompt_id + "', " +
                          std::to_string(index) + ")");
  }
  return it->second;
}

double ScoreTableJudge::p_true(const PromptCase& c, int index, bool) const {
  return lookup(c.prompt_id, index);
}

std::vector<double> ScoreTableJudge::mcq(const PromptCase& c) const {
  std::vector<double> scores(c.responses.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = lookup(c.prompt_id, static_cast<int>(i));
  }
  return softmax(scores);
}

double LengthBiasedJudge::p_true(const PromptCase& c, int index, bool) const {
  const double len = c.responses.at(index).length();
  return len / (len + half_length_);
}

std::vector<double> LengthBiasedJudge::mcq(const PromptCase& c) const {
  std::vector<double> p(c.responses.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = c.responses[i].length();
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

RewardVector mcq_rewards(const JudgeOracle& judge, const PromptCase& c) {
  c.validate();
  if (c.n() > judge.mcq_option_capacity()) {
    throw DomainError("case '" + c.prompt_id + "' has n = " + std::to_string(c.n()) +
                      " > judge option capacity " +
                      std::to_string(judge.mcq_option_capacity()));
  }
  std::vector<double> values = judge.mcq(c);
  if (values.size() != static_cast<std::size_t>(c.n())) {
    throw OracleContractError("mcq judge returned " + std::to_string(values.size()) +
                              " values for n = " + std::to_string(c.n()));
  }
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw OracleContractError("mcq judge returned a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw OracleContractError("mcq judge vector sums to " + std::to_string(sum) +
                              ", expected 1");
  }
  return RewardVector{c.prompt_id, std::move(values), RewardScheme::mcq};
}

RewardVector p_true_rewards(const JudgeOracle& judge, const PromptCase& c,
                            bool with_reference) {
  c.validate();
  RewardVector rv;
  rv.prompt_id = c.prompt_id;
  rv.scheme = with_reference ? RewardScheme::p_true_ref : RewardScheme::p_true;
  rv.values.reserve(c.responses.size());
  for (int i = 0; i < c.n(); ++i) {
    const double v = judge.p_true(c, i, with_reference);
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw OracleContractError("judge p_true value " + std::to_string(v) +
                                " outside [0, 1] for '" + c.prompt_id + "'");
    }
    rv.values.push_back(v);
  }
  return rv;
}

std::vector<double> standardize(std::span<const double> values) {
  std::vector<double> z(values.begin(), values.end());
  if (z.empty()) return z;
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= z.size();
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= z.size();
  const double sd = std::sqrt(var);
  if (sd == 0.0) {
    std::fill(z.begin(), z.end(), 0.0);
    return z;
  }
  for (double& v : z) v = (v - mean) / sd;
  return z;
}

RewardVector calibrate_reward(const RewardVector& judge_r,
                              const RewardVector& intrinsic_r, double alpha) {
  if (judge_r.values.size() != intrinsic_r.values.size()) {
    throw DomainError("calibrate_reward: length mismatch " +
                      std::to_string(judge_r.values.size()) + " vs " +
                      std::to_string(intrinsic_r.values.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("calibrate_reward: alpha must lie in [0, 1]");
  }
  const std::vector<double> zj = standardize(judge_r.values);
  const std::vector<double> zi = standardize(intrinsic_r.values);
  RewardVector out;
  out.prompt_id = judge_r.prompt_id;
  out.scheme = RewardScheme::calibrated;
  out.values.resize(zj.size());
  for (std::size_t i = 0; i < zj.size(); ++i) {
    out.values[i] = alpha * zj[i] + (1.0 - alpha) * zi[i];
  }
  return out;
}

}  // namespace prefkd
