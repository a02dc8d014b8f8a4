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

#include "prefkd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "prefkd/losses.hpp"
#include "prefkd/metrics.hpp"
#include "prefkd/preference.hpp"
#include "prefkd/reward.hpp"
#include "prefkd/toylm.hpp"
#include "prefkd/train.hpp"

namespace prefkd {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTolerance = 1e-5;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

double pick(std::mt19937_64& rng, std::initializer_list<double> values) {
  return *(values.begin() + rng() % values.size());
}

std::vector<double> random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

// Central finite differences of a scalar function of a vector.
std::vector<double> fd_gradient(std::vector<double> x,
                                const std::function<double(std::span<const double>)>& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kFdStep;
    const double hi = f(x);
    x[i] = keep - kFdStep;
    const double lo = f(x);
    x[i] = keep;
    g[i] = (hi - lo) / (2.0 * kFdStep);
  }
  return g;
}

double relative_error(std::span<const double> analytic, std::span<const double> fd) {
  double worst = 0.0, scale_a = 0.0, scale_f = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - fd[i]));
    scale_a = std::max(scale_a, std::abs(analytic[i]));
    scale_f = std::max(scale_f, std::abs(fd[i]));
  }
  return worst / std::max({scale_a, scale_f, 1e-8});
}

// Runs `instances` random gradient checks; returns the worst relative error.
// make_instance returns (point, objective, analytic gradient at point).
struct FdInstance {
  std::vector<double> point;
  std::function<double(std::span<const double>)> objective;
  std::vector<double> analytic;
};

CheckResult fd_check(const std::string& name, int instances, std::mt19937_64& rng,
                     const std::function<FdInstance(std::mt19937_64&)>& make_instance) {
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    FdInstance inst = make_instance(rng);
    const std::vector<double> fd = fd_gradient(inst.point, inst.objective);
    worst = std::max(worst, relative_error(inst.analytic, fd));
  }
  return CheckResult{name, worst < kFdTolerance,
                     "max rel err " + fmt(worst) + " over " +
                         std::to_string(instances) + " instances (tol 1e-5)"};
}

// Flattens a model-parameter loss into a vector objective over the table.
FdInstance table_instance(const LogitTable& student,
                          const std::function<double(const LogitTable&)>& loss_value,
                          const LogitTable& analytic) {
  FdInstance inst;
  inst.point = student.data;
  const int vocab = student.vocab_size;
  const int order = student.order;
  inst.objective = [vocab, order, loss_value](std::span<const double> x) {
    LogitTable model;
    model.vocab_size = vocab;
    model.order = order;
    model.data.assign(x.begin(), x.end());
    return loss_value(model);
  };
  inst.analytic = analytic.data;
  return inst;
}

Response random_response(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  const int len = min_len + static_cast<int>(uniform01(rng) * (max_len - min_len + 1));
  Response r;
  r.tokens.resize(std::max(1, len));
  for (int& t : r.tokens) t = static_cast<int>(uniform01(rng) * vocab);
  return r;
}

std::vector<int> random_prompt(std::mt19937_64& rng, int vocab, int len) {
  std::vector<int> p(len);
  for (int& t : p) t = static_cast<int>(uniform01(rng) * vocab);
  return p;
}

CheckResult check_decomposition_identity(const VerifyOptions& options) {
  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  long count = 0;
  for (int n : {2, 3, 4}) {
    for (double beta : {1.0, 10.0}) {
      for (int k = 0; k < options.pairs_per_setting; ++k) {
        const auto r1 = random_vector(rng, n, -1.0, 1.0);
        const auto r2 = random_vector(rng, n, -1.0, 1.0);
        const RankingDist p = plackett_luce(r1, beta);
        const RankingDist q = plackett_luce(r2, beta);
        worst = std::max(worst, decomposition_residual(p, q));
        ++count;
      }
    }
  }
  return CheckResult{"decomposition_identity", worst < 1e-9,
                     "max |kld_explicit - kld_factored| = " + fmt(worst) + " over " +
                         std::to_string(count) + " pairs, n in {2,3,4}, beta in {1,10}"};
}

CheckResult check_jsd_form(const VerifyOptions& options) {
  std::mt19937_64 rng(options.seed + 1);
  double worst_sym = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = 2 + static_cast<int>(uniform01(rng) * 3);
    const RankingDist p = plackett_luce(random_vector(rng, n, -1.0, 1.0), 1.0);
    const RankingDist q = plackett_luce(random_vector(rng, n, -1.0, 1.0), 1.0);
    worst_sym = std::max(worst_sym, std::abs(jsd_preference(p, q) - jsd_preference(q, p)));
  }

  // Two-outcome hand case: p = (1/2, 1/2), q = (1/4, 3/4).
  std::vector<std::vector<double>> p_rows(4), q_rows(4);
  p_rows[3] = {0.5, 0.5};
  q_rows[3] = {0.25, 0.75};
  const RankingDist p2 = RankingDist::from_rows(2, p_rows);
  const RankingDist q2 = RankingDist::from_rows(2, q_rows);
  const double kl_pq = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  const double kl_qp = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  const double hand = 0.5 * kl_pq + 0.5 * kl_qp;
  const double got = jsd_preference(p2, q2);

  const bool pass = worst_sym < 1e-12 && std::abs(got - hand) < 1e-12 &&
                    std::abs(got - 0.137327) < 1e-6;
  return CheckResult{"jsd_form", pass,
                     "max asymmetry " + fmt(worst_sym) + "; two-outcome value " +
                         fmt(got) + " vs 0.137327"};
}

std::vector<CheckResult> check_gradients(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  std::mt19937_64 rng(options.seed + 2);
  const int instances = options.fd_instances;

  results.push_back(fd_check("grad_toylm_logprob", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 4);
    const int order = uniform01(r) < 0.5 ? 0 : 1;
    const LogitTable model = make_random_model(vocab, order, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    const Response resp = random_response(r, vocab, 3, 5);
    return table_instance(
        model,
        [prompt, resp](const LogitTable& m) { return sequence_logprob(m, prompt, resp); },
        logprob_gradient(model, prompt, resp));
  }));

  results.push_back(fd_check("grad_ppd", instances, rng, [](std::mt19937_64& r) {
    const int n = 2 + static_cast<int>(uniform01(r) * 3);
    const double beta = pick(r, {1.0, 2.0, 10.0});
    const double gamma = pick(r, {0.0, 0.3, 0.5, 0.9});
    const std::vector<double> teacher = random_vector(r, n, -0.8, 0.8);
    FdInstance inst;
    inst.point = random_vector(r, n, -0.8, 0.8);
    inst.objective = [teacher, beta, gamma](std::span<const double> x) {
      return ppd_loss(teacher, x, beta, gamma).value;
    };
    inst.analytic = *ppd_loss(teacher, inst.point, beta, gamma).grad_student_rewards;
    return inst;
  }));

  results.push_back(fd_check("grad_group_relative", instances, rng, [](std::mt19937_64& r) {
    const int n = 3 + static_cast<int>(uniform01(r) * 3);
    const auto pairs = build_pair_set(random_vector(r, n, -1.0, 1.0));
    const double tau = pick(r, {0.5, 1.0, 2.0});
    FdInstance inst;
    inst.point = random_vector(r, n, -1.5, 1.5);
    inst.objective = [pairs, tau](std::span<const double> x) {
      return group_relative_loss(x, pairs, tau).value;
    };
    inst.analytic = *group_relative_loss(inst.point, pairs, tau).grad_student_rewards;
    return inst;
  }));

  results.push_back(fd_check("grad_soft_target", instances, rng, [](std::mt19937_64& r) {
    const int n = 3 + static_cast<int>(uniform01(r) * 3);
    std::vector<double> p_raw = random_vector(r, n, 0.1, 1.0);
    double sum = 0.0;
    for (double v : p_raw) sum += v;
    for (double& v : p_raw) v /= sum;
    const std::vector<double> p = p_raw;
    auto logq_of = [](std::span<const double> z) {
      double hi = -1e300, s = 0.0;
      for (double v : z) hi = std::max(hi, v);
      for (double v : z) s += std::exp(v - hi);
      const double lse = hi + std::log(s);
      std::vector<double> out(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
      return out;
    };
    FdInstance inst;
    inst.point = random_vector(r, n, -1.0, 1.0);
    inst.objective = [p, logq_of](std::span<const double> z) {
      return soft_target_loss(p, logq_of(z)).value;
    };
    inst.analytic = *soft_target_loss(p, logq_of(inst.point)).grad_student_logits;
    return inst;
  }));

  results.push_back(fd_check("grad_grkd_total", instances, rng, [](std::mt19937_64& r) {
    const int n = 3 + static_cast<int>(uniform01(r) * 3);
    const auto pairs = build_pair_set(random_vector(r, n, -1.0, 1.0));
    std::vector<double> p_raw = random_vector(r, n, 0.1, 1.0);
    double sum = 0.0;
    for (double v : p_raw) sum += v;
    for (double& v : p_raw) v /= sum;
    const std::vector<double> p = p_raw;
    const double tau = 1.0;
    const double lambda = pick(r, {0.25, 0.5, 0.75});
    FdInstance inst;
    inst.point = random_vector(r, n, -1.0, 1.0);
    inst.objective = [p, pairs, tau, lambda](std::span<const double> z) {
      return grkd_case_loss(z, p, pairs, tau, lambda).value;
    };
    inst.analytic =
        *grkd_case_loss(inst.point, p, pairs, tau, lambda).grad_student_logits;
    return inst;
  }));

  results.push_back(fd_check("grad_standard_kd", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 3);
    const LogitTable teacher = make_random_model(vocab, 1, 1.5, r());
    const LogitTable student = make_random_model(vocab, 1, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    const Response resp = random_response(r, vocab, 3, 5);
    const double temp = pick(r, {0.7, 1.0, 2.0});
    return table_instance(
        student,
        [teacher, prompt, resp, temp](const LogitTable& m) {
          return standard_kd_loss(teacher, m, prompt, resp, temp).value;
        },
        *standard_kd_loss(teacher, student, prompt, resp, temp).grad_student_params);
  }));

  results.push_back(fd_check("grad_seqkd", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 3);
    const LogitTable student = make_random_model(vocab, 1, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    const Response resp = random_response(r, vocab, 3, 5);
    return table_instance(
        student,
        [prompt, resp](const LogitTable& m) { return seqkd_loss(m, prompt, resp).value; },
        *seqkd_loss(student, prompt, resp).grad_student_params);
  }));

  results.push_back(fd_check("grad_minillm_nll", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 3);
    const LogitTable teacher = make_random_model(vocab, 1, 1.5, r());
    const LogitTable student = make_random_model(vocab, 1, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    std::vector<Response> responses;
    const int n = 2 + static_cast<int>(uniform01(r) * 3);
    for (int i = 0; i < n; ++i) responses.push_back(random_response(r, vocab, 2, 5));

    // Weights are detached: freeze them at the base point and check the
    // gradient of the weighted NLL alone.
    const LossResult base = minillm_weighted_loss(teacher, student, prompt, responses);
    std::vector<double> weights(responses.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
      weights[i] = base.diagnostics.at("weight_" + std::to_string(i));
    }
    return table_instance(
        student,
        [prompt, responses, weights](const LogitTable& m) {
          double value = 0.0;
          for (std::size_t i = 0; i < responses.size(); ++i) {
            value -= weights[i] * sequence_logprob(m, prompt, responses[i]) /
                     responses[i].length();
          }
          return value;
        },
        *base.grad_student_params);
  }));

  results.push_back(fd_check("grad_dpo", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 3);
    const LogitTable policy = make_random_model(vocab, 1, 1.5, r());
    const LogitTable reference = make_random_model(vocab, 1, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    const Response winner = random_response(r, vocab, 2, 5);
    const Response loser = random_response(r, vocab, 2, 5);
    const double beta_d = pick(r, {0.5, 1.0, 2.0});
    return table_instance(
        policy,
        [reference, prompt, winner, loser, beta_d](const LogitTable& m) {
          return dpo_loss(m, reference, prompt, winner, loser, beta_d).value;
        },
        *dpo_loss(policy, reference, prompt, winner, loser, beta_d).grad_student_params);
  }));

  results.push_back(fd_check("grad_simpo", instances, rng, [](std::mt19937_64& r) {
    const int vocab = 4 + static_cast<int>(uniform01(r) * 3);
    const LogitTable policy = make_random_model(vocab, 1, 1.5, r());
    const std::vector<int> prompt = random_prompt(r, vocab, 2);
    const Response winner = random_response(r, vocab, 2, 5);
    const Response loser = random_response(r, vocab, 2, 5);
    const double beta_s = pick(r, {0.5, 1.0, 2.0});
    const double margin = uniform(r, 0.0, 1.0);
    return table_instance(
        policy,
        [prompt, winner, loser, beta_s, margin](const LogitTable& m) {
          return simpo_loss(m, prompt, winner, loser, beta_s, margin).value;
        },
        *simpo_loss(policy, prompt, winner, loser, beta_s, margin).grad_student_params);
  }));

  results.push_back(fd_check("grad_pro", instances, rng, [](std::mt19937_64& r) {
    const int n = 2 + static_cast<int>(uniform01(r) * 4);
    const std::vector<int> ranking = ranks_from_scores(random_vector(r, n, -1.0, 1.0));
    const double temp = pick(r, {0.5, 1.0, 2.0});
    FdInstance inst;
    inst.point = random_vector(r, n, -1.0, 1.0);
    inst.objective = [ranking, temp](std::span<const double> x) {
      return pro_loss(x, ranking, temp).value;
    };
    inst.analytic = *pro_loss(inst.point, ranking, temp).grad_student_rewards;
    return inst;
  }));

  return results;
}

CheckResult check_schedule_endpoints() {
  LossResult gr;
  gr.value = 1.25;
  gr.grad_student_rewards = std::vector<double>{0.5, -0.25, 0.125};
  LossResult st;
  st.value = 0.75;
  st.grad_student_logits = std::vector<double>{-0.375, 0.0625, 0.3125};

  const LambdaSchedule linear{ScheduleKind::linear, 100};
  const LambdaSchedule cosine{ScheduleKind::cosine, 100};

  const LossResult at0 = grkd_total_loss(gr, st, 0, linear);
  const LossResult atN = grkd_total_loss(gr, st, 100, linear);

  bool pass = at0.value == st.value && atN.value == gr.value;
  pass = pass && at0.grad_student_logits == st.grad_student_logits &&
         !at0.grad_student_rewards.has_value();
  pass = pass && atN.grad_student_rewards == gr.grad_student_rewards &&
         !atN.grad_student_logits.has_value();
  pass = pass && linear.lambda_at(50) == 0.5;
  pass = pass && linear.lambda_at(0) == 0.0 && linear.lambda_at(100) == 1.0;
  pass = pass && cosine.lambda_at(0) == 0.0 && cosine.lambda_at(100) == 1.0;
  return CheckResult{"schedule_endpoints", pass,
                     "bitwise st at 0, gr at end; linear midpoint 0.5"};
}

CheckResult check_closed_form_spots() {
  std::ostringstream detail;
  bool pass = true;
  auto expect = [&](const char* name, double got, double want, double tol) {
    const bool ok = std::abs(got - want) < tol;
    pass = pass && ok;
    if (!ok) detail << name << " got " << got << " want " << want << "; ";
  };

  {  // All-equal log-scores: |P| * ln 2 at tau = 1.
    const std::vector<double> scores = {3.0, 1.0, 2.0};
    const auto pairs = build_pair_set(scores);
    const std::vector<double> logq = {-1.0, -1.0, -1.0};
    expect("group_relative_zero_margin",
           group_relative_loss(logq, pairs, 1.0).value,
           static_cast<double>(pairs.size()) * std::log(2.0), 1e-6);
  }
  {  // Listwise NLL of equal rewards: ln 3 + ln 2.
    const std::vector<double> rewards = {0.4, 0.4, 0.4};
    const std::vector<int> ranking = {1, 2, 3};
    expect("pro_equal_rewards", pro_loss(rewards, ranking, 1.0).value,
           std::log(3.0) + std::log(2.0), 1e-6);
  }
  {  // Policy == reference: ln 2.
    const LogitTable model = make_random_model(5, 1, 1.0, 11);
    const std::vector<int> prompt = {0, 1};
    const Response winner{{1, 2, 3}};
    const Response loser{{2, 2}};
    expect("dpo_zero_margin",
           dpo_loss(model, model, prompt, winner, loser, 1.0).value, std::log(2.0),
           1e-6);
  }
  {  // Two candidates, beta 10, reward gap 0.1: P(1 over 2) = sigma(1).
    const std::vector<double> rewards = {0.1, 0.0};
    const RankingDist d = plackett_luce(rewards, 10.0);
    const std::vector<int> best_first = {0, 1};
    expect("plackett_luce_sigmoid", d.explicit_probs()[ranking_rank(best_first)],
           0.731059, 1e-6);
  }
  return CheckResult{"closed_form_spots", pass,
                     pass ? "group-relative, pro, dpo, plackett-luce values match"
                        : detail.str()};
}

CheckResult check_metric_fixtures() {
  bool pass = true;
  std::ostringstream detail;

  const std::vector<RankedPair> perfect(4, RankedPair{1, 2, 1, 2});
  const std::vector<RankedPair> inverted(4, RankedPair{1, 2, 2, 1});
  std::vector<RankedPair> mixed(3, RankedPair{1, 2, 1, 2});
  mixed.push_back(RankedPair{1, 2, 2, 1});

  pass = pass && human_agreement(perfect) == 1.0;
  pass = pass && human_agreement(inverted) == -1.0;
  pass = pass && human_agreement(mixed) == 0.5;

  const std::vector<LengthPair> three_of_five = {
      {5, 3}, {4, 2}, {6, 1}, {2, 7}, {3, 9}};
  pass = pass && prob_prefer_longer(three_of_five) == 0.6;

  if (!pass) detail << "fixture mismatch";
  return CheckResult{"metric_fixtures", pass,
                     pass ? "human agreement 1 / -1 / 0.5; prefer-longer 0.6"
                        : detail.str()};
}

CheckResult check_lr_warmup() {
  bool pass = true;
  pass = pass && lr_at(0, 100, 2.0, 0.1) == 0.0;
  pass = pass && lr_at(5, 100, 2.0, 0.1) == 1.0;
  pass = pass && lr_at(10, 100, 2.0, 0.1) == 2.0;
  pass = pass && lr_at(100, 100, 2.0, 0.1) == 2.0;
  return CheckResult{"lr_warmup", pass, "ramp 0 -> base over ceil(0.1 * total)"};
}

}  // namespace

std::vector<CheckResult> run_verification_suite(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  results.push_back(check_decomposition_identity(options));
  results.push_back(check_jsd_form(options));
  for (CheckResult& r : check_gradients(options)) results.push_back(std::move(r));
  results.push_back(check_schedule_endpoints());
  results.push_back(check_closed_form_spots());
  results.push_back(check_metric_fixtures());
  results.push_back(check_lr_warmup());
  return results;
}

std::string render_check_results(const std::vector<CheckResult>& results) {
  std::size_t width = 0;
  for (const CheckResult& r : results) width = std::max(width, r.name.size());
  std::ostringstream out;
  for (const CheckResult& r : results) {
    out << (r.pass ? "PASS  " : "FAIL  ") << r.name;
    for (std::size_t i = r.name.size(); i < width + 2; ++i) out << ' ';
    out << r.detail << '\n';
  }
  return out.str();
}

}  // namespace prefkd
