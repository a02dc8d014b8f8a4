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

#ifndef PREFKD_TRAIN_HPP_
#define PREFKD_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefkd/corpus.hpp"
#include "prefkd/losses.hpp"
#include "prefkd/toylm.hpp"

namespace prefkd {

enum class LossKind { ppd, grkd, dpo, simpo, pro, standard_kd, seqkd, minillm };
enum class DecayKind { constant, cosine };
enum class JudgeKind { none, uniform, score_table, length_biased };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind kind);

/// Experiment configuration. Defaults are the desk-scale profile; the
/// paper-faithful LLM profile (batch 128, warmup 0.1, beta 10, n 4,
/// alpha 0.8, one epoch) shares every value except lr and batch size.
struct RunConfig {
  LossKind loss = LossKind::grkd;
  double lr = 1e-2;
  double warmup_ratio = 0.1;
  int batch_size = 32;
  int epochs = 1;
  int n_samples = 4;
  double beta = 10.0;
  double tau = 1.0;
  double gamma = 0.5;
  double alpha = 0.8;
  double beta_d = 1.0;
  double beta_s = 1.0;
  double margin = 0.0;
  ScheduleKind schedule = ScheduleKind::linear;
  /// Freezes lambda for ablations (0 = soft-target only, 1 = pure ranking).
  std::optional<double> lambda_fixed;
  DecayKind decay = DecayKind::constant;
  std::uint64_t seed = 0;
  int max_len = 16;
  double sample_temperature = 1.0;
  /// When false, responses are sampled once from the initial student and
  /// reused every epoch.
  bool resample_each_epoch = true;
  /// When not none, teacher rewards are alpha-blended with judge rewards.
  JudgeKind judge = JudgeKind::none;
  std::string judge_table_path;

  void validate() const;  // throws ConfigError
};

/// JSON object with the RunConfig field names; unknown keys rejected.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

struct TraceRow {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double lambda = 0.0;
};

struct RunReport {
  RunConfig config;
  std::vector<TraceRow> trace;
  LogitTable final_student;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
};

/// Warmup learning rate: linear ramp from 0 to base_lr over
/// ceil(warmup_ratio * total_steps) steps, then constant (or cosine decay).
double lr_at(long step, long total_steps, double base_lr, double warmup_ratio,
             DecayKind decay = DecayKind::constant);

struct AdamState {
  LogitTable m;
  LogitTable v;
  long t = 0;

  static AdamState init(int vocab_size, int order);
};

/// Standard Adam update (b1 = 0.9, b2 = 0.999, eps = 1e-8), bias-corrected.
void adam_step(LogitTable& params, const LogitTable& grad, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

/// End-to-end distillation: per epoch, a seeded shuffle of the corpus is
/// split into batches; each case contributes a loss/gradient per the
/// configured objective (preference objectives score student-sampled
/// responses with teacher-derived rewards); one Adam step per batch.
/// Bitwise reproducible for a fixed config and corpus.
RunReport distill(const LogitTable& teacher, const LogitTable& student_init,
                  const std::vector<PromptCase>& corpus, const RunConfig& config);

/// One distill run per requested sample size, all else (including the seed)
/// fixed.
std::vector<RunReport> sweep_sample_size(const LogitTable& teacher,
                                         const LogitTable& student_init,
                                         const std::vector<PromptCase>& corpus,
                                         const RunConfig& base,
                                         std::span<const int> sizes);

/// trace.csv: "step,loss,lr,lambda" rows, deterministic byte-for-byte.
void write_trace_csv(const RunReport& report, const std::filesystem::path& path);
/// report.csv: "metric,value" rows (config echo and metrics; no timestamps).
void write_report_csv(const RunReport& report, const std::filesystem::path& path);
/// sweep.csv: one row per sample size with the final agreement metrics.
void write_sweep_csv(std::span<const RunReport> reports, std::span<const int> sizes,
                     const std::filesystem::path& path);

/// Mean per-case Kendall tau between the rankings induced by student and
/// teacher average log-likelihoods over each case's stored responses.
double teacher_order_agreement(const LogitTable& teacher, const LogitTable& student,
                               const std::vector<PromptCase>& corpus);

}  // namespace prefkd

#endif  // PREFKD_TRAIN_HPP_
