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

#include "prefkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prefkd/errors.hpp"
#include "prefkd/reward.hpp"

namespace prefkd {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_pair_ranks(int a, int b) {
  if (!((a == 1 && b == 2) || (a == 2 && b == 1))) {
    throw DomainError("pair ranks must be a permutation of {1, 2}, got (" +
                      std::to_string(a) + ", " + std::to_string(b) + ")");
  }
}

}  // namespace

double human_agreement(std::span<const RankedPair> pairs) {
  if (pairs.empty()) throw DomainError("human_agreement: no pairs");
  double total = 0.0;
  for (const RankedPair& p : pairs) {
    check_pair_ranks(p.human_rank_good, p.human_rank_bad);
    check_pair_ranks(p.pred_rank_good, p.pred_rank_bad);
    total += std::abs(p.human_rank_good - p.pred_rank_good) +
             std::abs(p.human_rank_bad - p.pred_rank_bad);
  }
  return 1.0 - total / static_cast<double>(pairs.size());
}

double prob_prefer_longer(std::span<const LengthPair> pairs) {
  long longer = 0, unequal = 0;
  for (const LengthPair& p : pairs) {
    if (p.preferred_len < 1 || p.other_len < 1) {
      throw DomainError("prob_prefer_longer: lengths must be positive");
    }
    if (p.preferred_len == p.other_len) continue;
    ++unequal;
    if (p.preferred_len > p.other_len) ++longer;
  }
  if (unequal == 0) {
    throw UndefinedMetricError("prob_prefer_longer: no unequal-length pairs");
  }
  return static_cast<double>(longer) / static_cast<double>(unequal);
}

double pairwise_winrate(const Comparator& judge,
                        std::span<const Response> candidate_outputs,
                        std::span<const Response> baseline_outputs) {
  if (candidate_outputs.empty() || candidate_outputs.size() != baseline_outputs.size()) {
    throw DomainError("pairwise_winrate: output lists must be non-empty and aligned");
  }
  double score = 0.0;
  for (std::size_t i = 0; i < candidate_outputs.size(); ++i) {
    const int verdict = judge(candidate_outputs[i], baseline_outputs[i]);
    if (verdict > 0) score += 1.0;
    else if (verdict == 0) score += 0.5;
  }
  return score / static_cast<double>(candidate_outputs.size());
}

double kendall_tau(std::span<const int> rank_a, std::span<const int> rank_b) {
  if (rank_a.size() != rank_b.size()) {
    throw DomainError("kendall_tau: length mismatch");
  }
  const int n = static_cast<int>(rank_a.size());
  if (n < 2) throw DomainError("kendall_tau: needs length >= 2");
  long concordant = 0, discordant = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const long da = rank_a[i] - rank_a[j];
      const long db = rank_b[i] - rank_b[j];
      if (da * db > 0) ++concordant;
      else if (da * db < 0) ++discordant;
    }
  }
  const double num_pairs = 0.5 * n * (n - 1);
  return static_cast<double>(concordant - discordant) / num_pairs;
}

MetricReport evaluate_corpus(const std::vector<PromptCase>& corpus,
                             const LogitTable& student, const LogitTable* teacher,
                             const LogitTable* baseline, std::uint64_t seed) {
  MetricReport report;
  std::vector<RankedPair> ranked_pairs;
  std::vector<LengthPair> length_pairs;
  double tau_total = 0.0;
  long tau_count = 0;

  for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
    const PromptCase& c = corpus[ci];
    const RewardVector student_r = pad_rewards_for_case(student, c);
    const std::vector<int> pred_ranks = ranks_from_scores(student_r.values);

    std::optional<std::vector<int>> ref_ranks;
    if (teacher) {
      ref_ranks = ranks_from_scores(pad_rewards_for_case(*teacher, c).values);
    } else if (c.human_ranks) {
      ref_ranks = *c.human_ranks;
    }
    if (ref_ranks) {
      tau_total += kendall_tau(pred_ranks, *ref_ranks);
      ++tau_count;
    }

    // Good/bad pair per case from the human annotation: best and worst rank.
    if (c.human_ranks) {
      int good = 0, bad = 0;
      for (int i = 1; i < c.n(); ++i) {
        if ((*c.human_ranks)[i] < (*c.human_ranks)[good]) good = i;
        if ((*c.human_ranks)[i] > (*c.human_ranks)[bad]) bad = i;
      }
      const double pair_scores[2] = {student_r.values[good], student_r.values[bad]};
      const std::vector<int> pair_ranks = ranks_from_scores(pair_scores);
      ranked_pairs.push_back(RankedPair{1, 2, pair_ranks[0], pair_ranks[1]});
      const int preferred = pair_ranks[0] == 1 ? good : bad;
      const int other = preferred == good ? bad : good;
      length_pairs.push_back(LengthPair{c.responses[preferred].length(),
                                        c.responses[other].length()});
    }
  }

  if (!ranked_pairs.empty()) {
    report.human_agreement = human_agreement(ranked_pairs);
    try {
      report.prob_prefer_longer = prob_prefer_longer(length_pairs);
    } catch (const UndefinedMetricError&) {
      // All pairs tied on length; metric stays unset.
    }
  }
  if (tau_count > 0) report.kendall_tau_mean = tau_total / tau_count;

  if (teacher && baseline) {
    std::vector<Response> cand, base;
    cand.reserve(corpus.size());
    base.reserve(corpus.size());
    for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
      const PromptCase& c = corpus[ci];
      cand.push_back(sample_responses(student, c.prompt, 1, 16, 1.0,
                                      mix_seed(seed, 2 * ci))[0]);
      base.push_back(sample_responses(*baseline, c.prompt, 1, 16, 1.0,
                                      mix_seed(seed, 2 * ci + 1))[0]);
    }
    std::vector<double> scores_c(cand.size()), scores_b(base.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
      scores_c[i] = pad_reward(*teacher, corpus[i].prompt, cand[i]);
      scores_b[i] = pad_reward(*teacher, corpus[i].prompt, base[i]);
    }
    std::size_t idx = 0;
    // Judge by teacher average log-likelihood of each output.
    auto judge = [&](const Response&, const Response&) -> int {
      const double d = scores_c[idx] - scores_b[idx];
      ++idx;
      return d > 0 ? 1 : (d < 0 ? -1 : 0);
    };
    report.pairwise_winrate = pairwise_winrate(judge, cand, base);
    report.counts["winrate_pairs"] = static_cast<long>(cand.size());
  }

  report.counts["cases"] = static_cast<long>(corpus.size());
  report.counts["ranked_cases"] = tau_count;
  report.counts["human_pairs"] = static_cast<long>(ranked_pairs.size());
  return report;
}

void write_metric_report_csv(const MetricReport& report,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics: " + path.string());
  out << "metric,value\n";
  if (report.human_agreement) out << "human_agreement," << fmt(*report.human_agreement) << '\n';
  if (report.prob_prefer_longer) out << "prob_prefer_longer," << fmt(*report.prob_prefer_longer) << '\n';
  if (report.pairwise_winrate) out << "pairwise_winrate," << fmt(*report.pairwise_winrate) << '\n';
  if (report.kendall_tau_mean) out << "kendall_tau_mean," << fmt(*report.kendall_tau_mean) << '\n';
  for (const auto& [key, value] : report.counts) {
    out << "count." << key << ',' << value << '\n';
  }
}

void write_reward_dump_csv(const std::vector<PromptCase>& corpus,
                           const LogitTable& student, const LogitTable* teacher,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write reward dump: " + path.string());
  out << "prompt_id,response_index,student_reward";
  if (teacher) out << ",teacher_reward";
  out << '\n';
  for (const PromptCase& c : corpus) {
    for (int i = 0; i < c.n(); ++i) {
      out << c.prompt_id << ',' << i << ','
          << fmt(pad_reward(student, c.prompt, c.responses[i]));
      if (teacher) out << ',' << fmt(pad_reward(*teacher, c.prompt, c.responses[i]));
      out << '\n';
    }
  }
}

std::string render_metric_report(const MetricReport& report) {
  std::ostringstream out;
  auto line = [&out](const std::string& name, const std::string& value) {
    out << name;
    for (std::size_t i = name.size(); i < 24; ++i) out << ' ';
    out << value << '\n';
  };
  if (report.human_agreement) line("human_agreement", fmt(*report.human_agreement));
  if (report.prob_prefer_longer) line("prob_prefer_longer", fmt(*report.prob_prefer_longer));
  if (report.pairwise_winrate) line("pairwise_winrate", fmt(*report.pairwise_winrate));
  if (report.kendall_tau_mean) line("kendall_tau_mean", fmt(*report.kendall_tau_mean));
  for (const auto& [key, value] : report.counts) {
    line("count." + key, std::to_string(value));
  }
  return out.str();
}

}  // namespace prefkd
