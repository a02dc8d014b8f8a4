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

#include "prefkd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <random>

#include <json.hpp>

#include "prefkd/errors.hpp"
#include "prefkd/metrics.hpp"
#include "prefkd/reward.hpp"

namespace prefkd {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
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

const std::map<std::string, LossKind>& loss_kind_names() {
  static const std::map<std::string, LossKind> names = {
      {"ppd", LossKind::ppd},
      {"grkd", LossKind::grkd},
      {"dpo", LossKind::dpo},
      {"simpo", LossKind::simpo},
      {"pro", LossKind::pro},
      {"standard_kd", LossKind::standard_kd},
      {"seqkd", LossKind::seqkd},
      {"minillm", LossKind::minillm},
  };
  return names;
}

bool uses_student_samples(LossKind kind) {
  switch (kind) {
    case LossKind::ppd:
    case LossKind::grkd:
    case LossKind::dpo:
    case LossKind::simpo:
    case LossKind::pro:
    case LossKind::minillm:
      return true;
    case LossKind::standard_kd:
    case LossKind::seqkd:
      return false;
  }
  return false;
}

std::unique_ptr<JudgeOracle> make_judge(const RunConfig& config) {
  switch (config.judge) {
    case JudgeKind::none:
      return nullptr;
    case JudgeKind::uniform:
      return std::make_unique<UniformJudge>();
    case JudgeKind::length_biased:
      return std::make_unique<LengthBiasedJudge>();
    case JudgeKind::score_table:
      if (config.judge_table_path.empty()) {
        throw ConfigError("score_table judge requires judge_table_path");
      }
      return std::make_unique<ScoreTableJudge>(
          ScoreTableJudge::from_file(config.judge_table_path));
  }
  return nullptr;
}

// dst += scale * src
void add_scaled(LogitTable& dst, const LogitTable& src, double scale) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) {
    dst.data[i] += scale * src.data[i];
  }
}

// Chain a per-response reward gradient into the logit table through the
// average-log-likelihood map: d pad_i / d theta = logprob_gradient_i / len_i.
void chain_reward_grad(LogitTable& dst, const LogitTable& student,
                       std::span<const int> prompt,
                       std::span<const Response> responses,
                       std::span<const double> grad_rewards, double scale) {
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const double g = grad_rewards[i] * scale;
    if (g == 0.0) continue;
    add_scaled(dst, logprob_gradient(student, prompt, responses[i]),
               g / responses[i].length());
  }
}

struct CaseOutcome {
  double loss = 0.0;
  bool contributed = false;
};

}  // namespace

LossKind loss_kind_from_string(const std::string& s) {
  auto it = loss_kind_names().find(s);
  if (it == loss_kind_names().end()) {
    throw ConfigError("unknown loss kind '" + s + "'");
  }
  return it->second;
}

std::string to_string(LossKind kind) {
  for (const auto& [name, k] : loss_kind_names()) {
    if (k == kind) return name;
  }
  return "?";
}

void RunConfig::validate() const {
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (n_samples < 2) throw ConfigError("n_samples must be >= 2");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
    throw ConfigError("warmup_ratio must lie in [0, 1]");
  }
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(beta_d > 0.0)) throw ConfigError("beta_d must be > 0");
  if (!(beta_s > 0.0)) throw ConfigError("beta_s must be > 0");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (!(sample_temperature > 0.0)) throw ConfigError("sample_temperature must be > 0");
  if (lambda_fixed && !(*lambda_fixed >= 0.0 && *lambda_fixed <= 1.0)) {
    throw ConfigError("lambda_fixed must lie in [0, 1]");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }

  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "loss") c.loss = loss_kind_from_string(value.get<std::string>());
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "warmup_ratio") c.warmup_ratio = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "n_samples") c.n_samples = value.get<int>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta_d") c.beta_d = value.get<double>();
      else if (key == "beta_s") c.beta_s = value.get<double>();
      else if (key == "margin") c.margin = value.get<double>();
      else if (key == "schedule") {
        const auto s = value.get<std::string>();
        if (s == "linear") c.schedule = ScheduleKind::linear;
        else if (s == "cosine") c.schedule = ScheduleKind::cosine;
        else throw ConfigError("unknown schedule '" + s + "'");
      } else if (key == "lambda_fixed") {
        if (!value.is_null()) c.lambda_fixed = value.get<double>();
      } else if (key == "decay") {
        const auto s = value.get<std::string>();
        if (s == "constant") c.decay = DecayKind::constant;
        else if (s == "cosine") c.decay = DecayKind::cosine;
        else throw ConfigError("unknown decay '" + s + "'");
      } else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "max_len") c.max_len = value.get<int>();
      else if (key == "sample_temperature") c.sample_temperature = value.get<double>();
      else if (key == "resample_each_epoch") c.resample_each_epoch = value.get<bool>();
      else if (key == "judge") {
        const auto s = value.get<std::string>();
        if (s == "none") c.judge = JudgeKind::none;
        else if (s == "uniform") c.judge = JudgeKind::uniform;
        else if (s == "score_table") c.judge = JudgeKind::score_table;
        else if (s == "length_biased") c.judge = JudgeKind::length_biased;
        else throw ConfigError("unknown judge '" + s + "'");
      } else if (key == "judge_table_path") c.judge_table_path = value.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  json j;
  j["loss"] = to_string(c.loss);
  j["lr"] = c.lr;
  j["warmup_ratio"] = c.warmup_ratio;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["n_samples"] = c.n_samples;
  j["beta"] = c.beta;
  j["tau"] = c.tau;
  j["gamma"] = c.gamma;
  j["alpha"] = c.alpha;
  j["beta_d"] = c.beta_d;
  j["beta_s"] = c.beta_s;
  j["margin"] = c.margin;
  j["schedule"] = c.schedule == ScheduleKind::linear ? "linear" : "cosine";
  if (c.lambda_fixed) j["lambda_fixed"] = *c.lambda_fixed;
  j["decay"] = c.decay == DecayKind::constant ? "constant" : "cosine";
  j["seed"] = c.seed;
  j["max_len"] = c.max_len;
  j["sample_temperature"] = c.sample_temperature;
  j["resample_each_epoch"] = c.resample_each_epoch;
  switch (c.judge) {
    case JudgeKind::none: j["judge"] = "none"; break;
    case JudgeKind::uniform: j["judge"] = "uniform"; break;
    case JudgeKind::score_table: j["judge"] = "score_table"; break;
    case JudgeKind::length_biased: j["judge"] = "length_biased"; break;
  }
  if (!c.judge_table_path.empty()) j["judge_table_path"] = c.judge_table_path;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << j.dump(2) << '\n';
}

double lr_at(long step, long total_steps, double base_lr, double warmup_ratio,
             DecayKind decay) {
  if (total_steps < 1) throw DomainError("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw DomainError("lr_at: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  }
  const long warmup_steps =
      static_cast<long>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (decay == DecayKind::constant || total_steps == warmup_steps) return base_lr;
  const double frac = static_cast<double>(step - warmup_steps) /
                      static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(frac * M_PI));
}

AdamState AdamState::init(int vocab_size, int order) {
  return AdamState{make_zero_table(vocab_size, order),
                   make_zero_table(vocab_size, order), 0};
}

void adam_step(LogitTable& params, const LogitTable& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.data.size() != grad.data.size() ||
      params.data.size() != state.m.data.size()) {
    throw DomainError("adam_step: shape mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    const double g = grad.data[i];
    state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m.data[i] / bc1;
    const double v_hat = state.v.data[i] / bc2;
    params.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double teacher_order_agreement(const LogitTable& teacher, const LogitTable& student,
                               const std::vector<PromptCase>& corpus) {
  double total = 0.0;
  long counted = 0;
  for (const PromptCase& c : corpus) {
    if (c.n() < 2) continue;
    const RewardVector t = pad_rewards_for_case(teacher, c);
    const RewardVector s = pad_rewards_for_case(student, c);
    total += kendall_tau(ranks_from_scores(s.values), ranks_from_scores(t.values));
    ++counted;
  }
  if (counted == 0) throw DomainError("teacher_order_agreement: empty corpus");
  return total / static_cast<double>(counted);
}

RunReport distill(const LogitTable& teacher, const LogitTable& student_init,
                  const std::vector<PromptCase>& corpus, const RunConfig& config) {
  config.validate();
  teacher.validate();
  student_init.validate();
  if (teacher.vocab_size != student_init.vocab_size ||
      teacher.order != student_init.order) {
    throw ConfigError("distill: teacher and student disagree on (V, m)");
  }
  if (corpus.empty()) throw ConfigError("distill: empty corpus");
  for (const PromptCase& c : corpus) c.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const std::unique_ptr<JudgeOracle> judge = make_judge(config);

  const long cases_per_epoch = static_cast<long>(corpus.size());
  const long steps_per_epoch =
      (cases_per_epoch + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * config.epochs;
  // The last update uses lambda = 1 ("increases to 1 at the end of training").
  const LambdaSchedule schedule{config.schedule, std::max<long>(1, total_steps - 1)};

  LogitTable student = student_init;
  AdamState adam = AdamState::init(student.vocab_size, student.order);
  std::mt19937_64 shuffle_rng(config.seed);

  // Frozen-sample ablation: one candidate set per case, drawn from the
  // initial student before any update.
  std::vector<std::vector<Response>> frozen_samples;
  if (!config.resample_each_epoch && uses_student_samples(config.loss)) {
    frozen_samples.resize(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      frozen_samples[i] = sample_responses(
          student_init, corpus[i].prompt, config.n_samples, config.max_len,
          config.sample_temperature, mix_seed(config.seed, i));
    }
  }

  RunReport report;
  report.config = config;
  report.trace.reserve(total_steps);

  long skipped = 0;
  long update_index = 0;

  auto case_gradient = [&](const PromptCase& c, std::size_t case_index, int epoch,
                           double lambda, LogitTable& grad_out) -> CaseOutcome {
    CaseOutcome outcome;
    std::span<const int> prompt(c.prompt);

    std::vector<Response> sampled;
    std::span<const Response> responses(c.responses);
    if (uses_student_samples(config.loss)) {
      if (config.resample_each_epoch) {
        sampled = sample_responses(
            student, prompt, config.n_samples, config.max_len,
            config.sample_temperature,
            mix_seed(config.seed, (static_cast<std::uint64_t>(epoch) << 32) |
                                      static_cast<std::uint64_t>(case_index)));
        responses = sampled;
      } else {
        responses = frozen_samples[case_index];
      }
    }

    // Teacher-derived scores for the candidate set, optionally judge-blended.
    std::vector<double> scores;
    std::vector<double> student_pads;
    if (uses_student_samples(config.loss)) {
      PromptCase scored;
      scored.prompt_id = c.prompt_id;
      scored.prompt = c.prompt;
      scored.responses.assign(responses.begin(), responses.end());
      const RewardVector intrinsic = pad_rewards_for_case(teacher, scored);
      if (judge) {
        const RewardVector judged = mcq_rewards(*judge, scored);
        scores = calibrate_reward(judged, intrinsic, config.alpha).values;
      } else {
        scores = intrinsic.values;
      }
      student_pads.reserve(responses.size());
      for (const Response& r : responses) {
        student_pads.push_back(pad_reward(student, prompt, r));
      }
    }

    switch (config.loss) {
      case LossKind::ppd: {
        const LossResult loss = ppd_loss(scores, student_pads, config.beta, config.gamma);
        chain_reward_grad(grad_out, student, prompt, responses,
                          *loss.grad_student_rewards, 1.0);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::grkd: {
        const auto pairs = build_pair_set(scores);
        std::vector<double> z(student_pads.size());
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = config.beta * student_pads[i];
        std::vector<double> scaled(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) scaled[i] = config.beta * scores[i];
        const std::vector<double> teacher_p = softmax(scaled);
        const LossResult loss = grkd_case_loss(z, teacher_p, pairs, config.tau, lambda);
        chain_reward_grad(grad_out, student, prompt, responses,
                          *loss.grad_student_logits, config.beta);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::dpo:
      case LossKind::simpo: {
        PromptCase scored;
        scored.prompt_id = c.prompt_id;
        scored.prompt = c.prompt;
        scored.responses.assign(responses.begin(), responses.end());
        PreferencePair pair;
        try {
          pair = build_max_min_pair(scored, scores);
        } catch (const DegeneratePairError&) {
          ++skipped;
          return outcome;
        }
        const Response& winner = responses[pair.winner_idx];
        const Response& loser = responses[pair.loser_idx];
        const LossResult loss =
            config.loss == LossKind::dpo
                ? dpo_loss(student, student_init, prompt, winner, loser, config.beta_d)
                : simpo_loss(student, prompt, winner, loser, config.beta_s,
                             config.margin);
        add_scaled(grad_out, *loss.grad_student_params, 1.0);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::pro: {
        const std::vector<int> ranking = ranks_from_scores(scores);
        const LossResult loss = pro_loss(student_pads, ranking, config.tau);
        chain_reward_grad(grad_out, student, prompt, responses,
                          *loss.grad_student_rewards, 1.0);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::minillm: {
        const LossResult loss =
            minillm_weighted_loss(teacher, student, prompt, responses);
        add_scaled(grad_out, *loss.grad_student_params, 1.0);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::standard_kd: {
        // Golden response: the case's best-scored candidate.
        int golden = 0;
        if (c.teacher_scores) {
          for (int i = 1; i < c.n(); ++i) {
            if ((*c.teacher_scores)[i] > (*c.teacher_scores)[golden]) golden = i;
          }
        }
        const LossResult loss = standard_kd_loss(teacher, student, prompt,
                                                 c.responses[golden], config.tau);
        add_scaled(grad_out, *loss.grad_student_params, 1.0);
        outcome.loss = loss.value;
        break;
      }
      case LossKind::seqkd: {
        double value = 0.0;
        for (const Response& r : c.responses) {
          const LossResult loss = seqkd_loss(student, prompt, r);
          add_scaled(grad_out, *loss.grad_student_params, 1.0 / c.n());
          value += loss.value / c.n();
        }
        outcome.loss = value;
        break;
      }
    }
    outcome.contributed = true;
    return outcome;
  };

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Seeded Fisher-Yates; every case exactly once per epoch.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng() % i;
      std::swap(order[i - 1], order[j]);
    }

    for (long b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * config.batch_size;
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));

      double lambda = config.lambda_fixed
                          ? *config.lambda_fixed
                          : schedule.lambda_at(std::min(update_index, schedule.total_steps));

      LogitTable batch_grad = make_zero_table(student.vocab_size, student.order);
      double batch_loss = 0.0;
      long contributed = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const CaseOutcome outcome =
            case_gradient(corpus[order[k]], order[k], epoch, lambda, batch_grad);
        if (outcome.contributed) {
          batch_loss += outcome.loss;
          ++contributed;
        }
      }
      if (contributed > 0) {
        for (double& g : batch_grad.data) g /= static_cast<double>(contributed);
        batch_loss /= static_cast<double>(contributed);
      }
      const double lr = lr_at(update_index + 1, total_steps, config.lr,
                              config.warmup_ratio, config.decay);
      adam_step(student, batch_grad, adam, lr);
      report.trace.push_back(TraceRow{update_index, batch_loss, lr, lambda});
      ++update_index;
    }
  }

  report.final_student = std::move(student);
  report.metrics["final_loss"] = report.trace.back().loss;
  report.metrics["teacher_order_agreement"] =
      teacher_order_agreement(teacher, report.final_student, corpus);
  report.metrics["skipped_cases"] = static_cast<double>(skipped);
  report.metrics["steps"] = static_cast<double>(total_steps);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<RunReport> sweep_sample_size(const LogitTable& teacher,
                                         const LogitTable& student_init,
                                         const std::vector<PromptCase>& corpus,
                                         const RunConfig& base,
                                         std::span<const int> sizes) {
  if (sizes.empty()) throw ConfigError("sweep: no sizes given");
  std::vector<RunReport> reports;
  reports.reserve(sizes.size());
  for (int n : sizes) {
    if (n < 2) throw ConfigError("sweep: sizes must each be >= 2");
    RunConfig config = base;
    config.n_samples = n;
    reports.push_back(distill(teacher, student_init, corpus, config));
  }
  return reports;
}

void write_trace_csv(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace: " + path.string());
  out << "step,loss,lr,lambda\n";
  for (const TraceRow& row : report.trace) {
    out << row.step << ',' << fmt(row.loss) << ',' << fmt(row.lr) << ','
        << fmt(row.lambda) << '\n';
  }
}

void write_report_csv(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << "key,value\n";
  out << "config.loss," << to_string(report.config.loss) << '\n';
  out << "config.lr," << fmt(report.config.lr) << '\n';
  out << "config.batch_size," << report.config.batch_size << '\n';
  out << "config.epochs," << report.config.epochs << '\n';
  out << "config.n_samples," << report.config.n_samples << '\n';
  out << "config.beta," << fmt(report.config.beta) << '\n';
  out << "config.tau," << fmt(report.config.tau) << '\n';
  out << "config.gamma," << fmt(report.config.gamma) << '\n';
  out << "config.alpha," << fmt(report.config.alpha) << '\n';
  out << "config.seed," << report.config.seed << '\n';
  for (const auto& [key, value] : report.metrics) {
    out << key << ',' << fmt(value) << '\n';
  }
}

void write_sweep_csv(std::span<const RunReport> reports, std::span<const int> sizes,
                     const std::filesystem::path& path) {
  if (reports.size() != sizes.size()) {
    throw DomainError("sweep csv: reports and sizes disagree");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write sweep csv: " + path.string());
  out << "n_samples,teacher_order_agreement,final_loss\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out << sizes[i] << ',' << fmt(reports[i].metrics.at("teacher_order_agreement"))
        << ',' << fmt(reports[i].metrics.at("final_loss")) << '\n';
  }
}

}  // namespace prefkd
