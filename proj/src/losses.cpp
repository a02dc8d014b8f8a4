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

#include "prefkd/losses.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "prefkd/errors.hpp"

namespace prefkd {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log sigmoid(x), stable for both signs.
double neg_log_sigmoid(double x) {
  if (x >= 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
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

std::vector<double> log_softmax(std::span<const double> x) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : x) hi = std::max(hi, v);
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - hi);
  const double lse = hi + std::log(sum);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

void check_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite entry");
  }
}

// dst += scale * src, matching shapes required.
void add_scaled(LogitTable& dst, const LogitTable& src, double scale) {
  if (dst.data.size() != src.data.size()) {
    throw DomainError("gradient tables disagree on shape");
  }
  for (std::size_t i = 0; i < dst.data.size(); ++i) {
    dst.data[i] += scale * src.data[i];
  }
}

}  // namespace

double LambdaSchedule::lambda_at(long step) const {
  if (total_steps < 1) throw DomainError("schedule: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw DomainError("schedule: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  if (step == 0) return 0.0;
  if (step == total_steps) return 1.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  switch (kind) {
    case ScheduleKind::linear:
      return frac;
    case ScheduleKind::cosine:
      return 0.5 * (1.0 - std::cos(frac * M_PI));
  }
  throw DomainError("schedule: unknown kind");
}

LossResult ppd_loss(std::span<const double> teacher_rewards,
                    std::span<const double> student_rewards, double beta,
                    double gamma) {
  if (teacher_rewards.size() != student_rewards.size()) {
    throw DomainError("ppd_loss: reward vectors disagree on n");
  }
  const int n = static_cast<int>(teacher_rewards.size());
  if (n < 2) throw DomainError("ppd_loss: needs n >= 2");

  const RankingDist teacher = plackett_luce(teacher_rewards, beta);
  const RankingDist student = plackett_luce(student_rewards, beta);
  const RankingDist mix = mixture_dist(teacher, student, gamma);

  const double kld_tm = kld_factored(teacher, mix);
  const double kld_mt = kld_factored(mix, teacher);

  // Gradient with respect to the student rewards, via the mixture rows.
  //
  // For KL(T||M) only the rows enter:  d/dm(v|S) = -reach_T(S) t(v|S)/m(v|S).
  // For KL(M||T) both the rows and the reach probabilities move; with
  // W(S) = E_M[sum of log(m/t) over the remaining choices from S],
  //   d/dm(v|S) = reach_M(S) (log(m(v|S)/t(v|S)) + 1 + W(S \ v)).
  // Rows chain into rewards through the student softmax share of the mixture.
  const std::vector<double> reach_t = teacher.reach_probabilities();
  const std::vector<double> reach_m = mix.reach_probabilities();

  const std::size_t num_masks = std::size_t{1} << n;
  std::vector<double> w_value(num_masks, 0.0);
  std::vector<std::uint32_t> masks;
  for (std::uint32_t mask = 0; mask < num_masks; ++mask) {
    if (std::popcount(mask) >= 2) masks.push_back(mask);
  }
  std::sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    const int pa = std::popcount(a), pb = std::popcount(b);
    return pa != pb ? pa < pb : a < b;
  });

  for (std::uint32_t mask : masks) {
    const auto& m_row = mix.row(mask);
    const auto& t_row = teacher.row(mask);
    double w = 0.0;
    int pos = 0;
    for (int v = 0; v < n; ++v) {
      if (!((mask >> v) & 1u)) continue;
      const double m = m_row[pos];
      if (m > 0.0) {
        w += m * (std::log(m) - std::log(t_row[pos]));
        w += m * w_value[mask & ~(1u << v)];
      }
      ++pos;
    }
    w_value[mask] = w;
  }

  std::vector<double> grad(n, 0.0);
  const double student_share = (1.0 - gamma) * beta;
  if (student_share != 0.0) {
    for (std::uint32_t mask : masks) {
      const double rt = reach_t[mask];
      const double rm = reach_m[mask];
      if (rt == 0.0 && rm == 0.0) continue;
      const auto& m_row = mix.row(mask);
      const auto& t_row = teacher.row(mask);
      const auto& s_row = student.row(mask);

      const int size = std::popcount(mask);
      std::vector<double> g_m(size);
      std::vector<int> items;
      items.reserve(size);
      for (int v = 0; v < n; ++v) {
        if ((mask >> v) & 1u) items.push_back(v);
      }
      double g_dot_s = 0.0;
      for (int i = 0; i < size; ++i) {
        const double m = m_row[i];
        const double t = t_row[i];
        const double log_mt = std::log(m) - std::log(t);
        const std::uint32_t rest = mask & ~(1u << items[i]);
        // t/m first: the ratio is exactly 1 at the fixed point, so the two
        // directional terms cancel bitwise and the gradient vanishes there.
        g_m[i] = 0.5 * (-rt * (t / m) + rm * (log_mt + 1.0 + w_value[rest]));
        g_dot_s += g_m[i] * s_row[i];
      }
      for (int i = 0; i < size; ++i) {
        grad[items[i]] += student_share * s_row[i] * (g_m[i] - g_dot_s);
      }
    }
  }

  LossResult out;
  out.value = 0.5 * kld_tm + 0.5 * kld_mt;
  out.grad_student_rewards = std::move(grad);
  out.diagnostics["kld_teacher_mixture"] = kld_tm;
  out.diagnostics["kld_mixture_teacher"] = kld_mt;
  return out;
}

std::vector<std::pair<int, int>> build_pair_set(std::span<const double> teacher_scores) {
  check_finite(teacher_scores, "build_pair_set");
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(teacher_scores.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (teacher_scores[i] > teacher_scores[j]) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

LossResult group_relative_loss(std::span<const double> student_logq,
                               std::span<const std::pair<int, int>> pairs,
                               double tau) {
  if (!(tau > 0.0)) throw DomainError("group_relative_loss: tau must be > 0");
  check_finite(student_logq, "group_relative_loss");
  const int n = static_cast<int>(student_logq.size());

  LossResult out;
  std::vector<double> grad(student_logq.size(), 0.0);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= n) {
      throw DomainError("group_relative_loss: pair index out of range");
    }
    const double arg = (student_logq[i] - student_logq[j]) / tau;
    out.value += neg_log_sigmoid(arg);
    const double slope = (1.0 - sigmoid(arg)) / tau;
    grad[i] -= slope;
    grad[j] += slope;
  }
  out.grad_student_rewards = std::move(grad);
  out.diagnostics["pair_count"] = static_cast<double>(pairs.size());
  return out;
}

LossResult soft_target_loss(std::span<const double> teacher_p,
                            std::span<const double> student_logq) {
  if (teacher_p.size() != student_logq.size()) {
    throw DomainError("soft_target_loss: length mismatch");
  }
  if (teacher_p.empty()) throw DomainError("soft_target_loss: empty input");
  check_finite(student_logq, "soft_target_loss");
  double sum = 0.0;
  for (double p : teacher_p) {
    if (!std::isfinite(p) || p < 0.0) {
      throw DomainError("soft_target_loss: teacher_p is not a distribution");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw DomainError("soft_target_loss: teacher_p sums to " + std::to_string(sum));
  }
  double lse = 0.0;
  {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : student_logq) hi = std::max(hi, v);
    double s = 0.0;
    for (double v : student_logq) s += std::exp(v - hi);
    lse = hi + std::log(s);
  }
  if (std::abs(lse) > 1e-6) {
    throw DomainError("soft_target_loss: student_logq is not log-normalized");
  }

  LossResult out;
  std::vector<double> grad(teacher_p.size());
  for (std::size_t i = 0; i < teacher_p.size(); ++i) {
    if (teacher_p[i] > 0.0) out.value -= teacher_p[i] * student_logq[i];
    grad[i] = std::exp(student_logq[i]) - teacher_p[i];
  }
  out.grad_student_logits = std::move(grad);
  return out;
}

LossResult grkd_total_loss(const LossResult& gr, const LossResult& st, long step,
                           const LambdaSchedule& schedule) {
  const double lambda = schedule.lambda_at(step);
  if (lambda == 0.0) {
    LossResult out = st;
    out.diagnostics["lambda"] = 0.0;
    return out;
  }
  if (lambda == 1.0) {
    LossResult out = gr;
    out.diagnostics["lambda"] = 1.0;
    return out;
  }

  LossResult out;
  out.value = lambda * gr.value + (1.0 - lambda) * st.value;
  auto blend = [&](const std::optional<std::vector<double>>& a,
                   const std::optional<std::vector<double>>& b)
      -> std::optional<std::vector<double>> {
    if (!a && !b) return std::nullopt;
    const std::size_t size = a ? a->size() : b->size();
    if (a && b && a->size() != b->size()) {
      throw DomainError("grkd_total_loss: gradient lengths disagree");
    }
    std::vector<double> g(size, 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      if (a) g[i] += lambda * (*a)[i];
      if (b) g[i] += (1.0 - lambda) * (*b)[i];
    }
    return g;
  };
  out.grad_student_rewards = blend(gr.grad_student_rewards, st.grad_student_rewards);
  out.grad_student_logits = blend(gr.grad_student_logits, st.grad_student_logits);
  out.diagnostics["lambda"] = lambda;
  out.diagnostics["gr_value"] = gr.value;
  out.diagnostics["st_value"] = st.value;
  return out;
}

LossResult standard_kd_loss(const LogitTable& teacher, const LogitTable& student,
                            std::span<const int> prompt, const Response& response,
                            double temperature) {
  if (teacher.vocab_size != student.vocab_size || teacher.order != student.order) {
    throw DomainError("standard_kd_loss: models disagree on (V, m)");
  }
  if (!(temperature > 0.0)) throw DomainError("standard_kd_loss: temperature must be > 0");
  if (response.tokens.empty()) throw DomainError("standard_kd_loss: empty response");

  const int len = response.length();
  LogitTable grad = make_zero_table(student.vocab_size, student.order);
  std::vector<int> history(prompt.begin(), prompt.end());
  double value = 0.0;
  std::vector<double> scaled_t(teacher.vocab_size), scaled_s(teacher.vocab_size);
  for (int tok : response.tokens) {
    if (tok < 0 || tok >= teacher.vocab_size) {
      throw DomainError("standard_kd_loss: token outside vocabulary");
    }
    const std::size_t ctx = teacher.context_index(history);
    auto t_row = teacher.row(ctx);
    auto s_row = student.row(ctx);
    for (int v = 0; v < teacher.vocab_size; ++v) {
      scaled_t[v] = t_row[v] / temperature;
      scaled_s[v] = s_row[v] / temperature;
    }
    const std::vector<double> p = softmax(scaled_t);
    const std::vector<double> q = softmax(scaled_s);
    auto g_row = grad.row(ctx);
    for (int v = 0; v < teacher.vocab_size; ++v) {
      value += p[v] * (std::log(p[v]) - std::log(q[v]));
      g_row[v] += (q[v] - p[v]) / (temperature * len);
    }
    history.push_back(tok);
  }

  LossResult out;
  out.value = value / len;
  out.grad_student_params = std::move(grad);
  return out;
}

LossResult seqkd_loss(const LogitTable& student, std::span<const int> prompt,
                      const Response& teacher_sample) {
  const double logp = sequence_logprob(student, prompt, teacher_sample);
  LogitTable grad = logprob_gradient(student, prompt, teacher_sample);
  const double inv_len = 1.0 / teacher_sample.length();
  for (double& g : grad.data) g *= -inv_len;

  LossResult out;
  out.value = -logp * inv_len;
  out.grad_student_params = std::move(grad);
  return out;
}

LossResult minillm_weighted_loss(const LogitTable& teacher,
                                 const LogitTable& student,
                                 std::span<const int> prompt,
                                 std::span<const Response> responses) {
  if (responses.empty()) throw DomainError("minillm_weighted_loss: no responses");
  std::vector<double> ratios(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    ratios[i] = minillm_reward(teacher, student, prompt, responses[i]);
  }
  const std::vector<double> weights = softmax(ratios);

  LossResult out;
  LogitTable grad = make_zero_table(student.vocab_size, student.order);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const double inv_len = 1.0 / responses[i].length();
    out.value -= weights[i] * sequence_logprob(student, prompt, responses[i]) * inv_len;
    // Weights are treated as constants; only the NLL part carries gradient.
    add_scaled(grad, logprob_gradient(student, prompt, responses[i]),
               -weights[i] * inv_len);
    out.diagnostics["weight_" + std::to_string(i)] = weights[i];
  }
  out.grad_student_params = std::move(grad);
  return out;
}

LossResult dpo_loss(const LogitTable& policy, const LogitTable& reference,
                    std::span<const int> prompt, const Response& winner,
                    const Response& loser, double beta_d) {
  const double margin = dpo_reward(policy, reference, prompt, winner) -
                        dpo_reward(policy, reference, prompt, loser);
  const double arg = beta_d * margin;

  LossResult out;
  out.value = neg_log_sigmoid(arg);
  const double slope = -beta_d * (1.0 - sigmoid(arg));
  LogitTable grad = logprob_gradient(policy, prompt, winner);
  for (double& g : grad.data) g *= slope;
  add_scaled(grad, logprob_gradient(policy, prompt, loser), -slope);
  out.grad_student_params = std::move(grad);
  out.diagnostics["margin"] = margin;
  return out;
}

LossResult simpo_loss(const LogitTable& policy, std::span<const int> prompt,
                      const Response& winner, const Response& loser,
                      double beta_s, double margin) {
  const double reward_margin =
      pad_reward(policy, prompt, winner) - pad_reward(policy, prompt, loser);
  const double arg = beta_s * reward_margin - margin;

  LossResult out;
  out.value = neg_log_sigmoid(arg);
  const double slope = -(1.0 - sigmoid(arg)) * beta_s;
  LogitTable grad = logprob_gradient(policy, prompt, winner);
  for (double& g : grad.data) g *= slope / winner.length();
  add_scaled(grad, logprob_gradient(policy, prompt, loser), -slope / loser.length());
  out.grad_student_params = std::move(grad);
  out.diagnostics["reward_margin"] = reward_margin;
  return out;
}

LossResult pro_loss(std::span<const double> policy_rewards,
                    std::span<const int> ranking, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("pro_loss: temperature must be > 0");
  check_finite(policy_rewards, "pro_loss");
  const int n = static_cast<int>(policy_rewards.size());
  if (static_cast<int>(ranking.size()) != n) {
    throw DomainError("pro_loss: ranking length != n");
  }
  // ranking[i] = rank of response i (1 = best); invert to best-first order.
  std::vector<int> order(n, -1);
  for (int i = 0; i < n; ++i) {
    const int r = ranking[i];
    if (r < 1 || r > n || order[r - 1] != -1) {
      throw DomainError("pro_loss: ranking is not a permutation of 1..n");
    }
    order[r - 1] = i;
  }

  LossResult out;
  std::vector<double> grad(policy_rewards.size(), 0.0);
  std::vector<int> remaining(order.begin(), order.end());
  for (int k = 0; k < n - 1; ++k) {
    std::span<const int> rest(remaining.data() + k, remaining.size() - k);
    double hi = -std::numeric_limits<double>::infinity();
    for (int idx : rest) hi = std::max(hi, policy_rewards[idx] / temperature);
    double z = 0.0;
    for (int idx : rest) z += std::exp(policy_rewards[idx] / temperature - hi);
    const double log_z = hi + std::log(z);
    out.value += log_z - policy_rewards[remaining[k]] / temperature;
    for (int idx : rest) {
      grad[idx] += std::exp(policy_rewards[idx] / temperature - log_z) / temperature;
    }
    grad[remaining[k]] -= 1.0 / temperature;
  }
  out.grad_student_rewards = std::move(grad);
  return out;
}

LossResult grkd_case_loss(std::span<const double> z,
                          std::span<const double> teacher_p,
                          std::span<const std::pair<int, int>> pairs, double tau,
                          double lambda) {
  if (z.size() != teacher_p.size()) throw DomainError("grkd_case_loss: length mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("grkd_case_loss: lambda must lie in [0, 1]");
  }
  const std::vector<double> logq = log_softmax(z);
  const std::vector<double> q = softmax(z);

  const LossResult gr = group_relative_loss(logq, pairs, tau);
  const double pair_count = gr.diagnostics.at("pair_count");
  const double gr_mean = pair_count > 0 ? gr.value / pair_count : 0.0;

  const LossResult st = soft_target_loss(teacher_p, logq);

  LossResult out;
  out.value = lambda * gr_mean + (1.0 - lambda) * st.value;
  std::vector<double> grad(z.size(), 0.0);
  if (lambda > 0.0 && pair_count > 0) {
    // Chain the logq gradient through log-softmax: dz_j = g_j - q_j * sum(g).
    const auto& g_logq = *gr.grad_student_rewards;
    double g_sum = 0.0;
    for (double g : g_logq) g_sum += g;
    for (std::size_t j = 0; j < z.size(); ++j) {
      grad[j] += lambda * (g_logq[j] - q[j] * g_sum) / pair_count;
    }
  }
  if (lambda < 1.0) {
    const auto& g_st = *st.grad_student_logits;
    for (std::size_t j = 0; j < z.size(); ++j) {
      grad[j] += (1.0 - lambda) * g_st[j];
    }
  }
  out.grad_student_logits = std::move(grad);
  out.diagnostics["lambda"] = lambda;
  out.diagnostics["pair_count"] = pair_count;
  out.diagnostics["gr_mean"] = gr_mean;
  out.diagnostics["st_value"] = st.value;
  return out;
}

}  // namespace prefkd
