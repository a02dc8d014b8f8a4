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

#include "prefkd/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "prefkd/corpus.hpp"
#include "prefkd/errors.hpp"
#include "prefkd/metrics.hpp"
#include "prefkd/toylm.hpp"
#include "prefkd/train.hpp"
#include "prefkd/verify.hpp"

namespace prefkd {

namespace {

namespace fs = std::filesystem;

struct GenerateArgs {
  GenConfig config;
  std::uint64_t seed = 7;
  double teacher_scale = 1.5;
  std::string out_dir = ".";
  std::string teacher_path;  // optional existing teacher checkpoint
};

int run_generate(const GenerateArgs& args) {
  fs::create_directories(args.out_dir);
  LogitTable teacher;
  if (!args.teacher_path.empty()) {
    teacher = load_model(args.teacher_path);
  } else {
    teacher = make_random_model(args.config.vocab_size, args.config.order,
                                args.teacher_scale, mix_seed(args.seed, 0x7e));
  }
  const auto corpus = generate_synthetic_corpus(teacher, args.config, args.seed);
  const fs::path corpus_path = fs::path(args.out_dir) / "corpus.jsonl";
  const fs::path teacher_path = fs::path(args.out_dir) / "teacher.toylm";
  save_corpus(corpus, corpus_path);
  save_model(teacher, teacher_path);
  std::cout << "wrote " << corpus.size() << " cases to " << corpus_path.string()
            << "\nwrote teacher checkpoint to " << teacher_path.string() << '\n';
  return 0;
}

struct DistillArgs {
  std::string config_path;
  std::string corpus_path;
  std::string teacher_path;
  std::string student_path;  // optional starting checkpoint
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
  double student_scale = 0.1;
};

RunConfig resolve_config(const DistillArgs& args) {
  RunConfig config;
  if (!args.config_path.empty()) config = load_run_config(args.config_path);
  if (args.seed) config.seed = *args.seed;
  if (args.loss) config.loss = loss_kind_from_string(*args.loss);
  config.validate();
  return config;
}

LogitTable resolve_student(const DistillArgs& args, const LogitTable& teacher,
                           const RunConfig& config) {
  if (!args.student_path.empty()) return load_model(args.student_path);
  // Fresh student: small random logits, same shape as the teacher.
  return make_random_model(teacher.vocab_size, teacher.order, args.student_scale,
                           mix_seed(config.seed, 0x5));
}

int run_distill(const DistillArgs& args) {
  const RunConfig config = resolve_config(args);
  const LogitTable teacher = load_model(args.teacher_path);
  const auto corpus = load_corpus(args.corpus_path);
  const LogitTable student_init = resolve_student(args, teacher, config);

  const RunReport report = distill(teacher, student_init, corpus, config);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  write_trace_csv(report, out / "trace.csv");
  write_report_csv(report, out / "report.csv");
  save_model(report.final_student, out / "student.toylm");
  save_model(student_init, out / "student_init.toylm");

  std::cout << "steps " << report.trace.size() << ", final loss "
            << report.metrics.at("final_loss") << ", teacher-order agreement "
            << report.metrics.at("teacher_order_agreement") << "\n"
            << "wall " << report.wall_seconds << " s; outputs in "
            << out.string() << '\n';
  return 0;
}

struct SweepArgs {
  DistillArgs distill;
  std::vector<int> sizes;
};

int run_sweep(const SweepArgs& args) {
  const RunConfig config = resolve_config(args.distill);
  const LogitTable teacher = load_model(args.distill.teacher_path);
  const auto corpus = load_corpus(args.distill.corpus_path);
  const LogitTable student_init = resolve_student(args.distill, teacher, config);

  const auto reports =
      sweep_sample_size(teacher, student_init, corpus, config, args.sizes);

  fs::create_directories(args.distill.out_dir);
  const fs::path out(args.distill.out_dir);
  write_sweep_csv(reports, args.sizes, out / "sweep.csv");

  bool monotone = true;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].metrics.at("teacher_order_agreement") <
        reports[i - 1].metrics.at("teacher_order_agreement")) {
      monotone = false;
    }
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::cout << "n=" << args.sizes[i] << " agreement "
              << reports[i].metrics.at("teacher_order_agreement") << '\n';
  }
  // Reported, not asserted: the expected trend is improvement with n.
  std::cout << "agreement trend non-decreasing in n: " << (monotone ? "yes" : "no")
            << "\nwrote " << (out / "sweep.csv").string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string corpus_path;
  std::string student_path;
  std::string teacher_path;
  std::string baseline_path;
  std::string out_dir = ".";
  std::uint64_t seed = 7;
};

int run_eval(const EvalArgs& args) {
  const auto corpus = load_corpus(args.corpus_path);
  const LogitTable student = load_model(args.student_path);
  std::optional<LogitTable> teacher, baseline;
  if (!args.teacher_path.empty()) teacher = load_model(args.teacher_path);
  if (!args.baseline_path.empty()) baseline = load_model(args.baseline_path);

  const MetricReport report =
      evaluate_corpus(corpus, student, teacher ? &*teacher : nullptr,
                      baseline ? &*baseline : nullptr, args.seed);

  fs::create_directories(args.out_dir);
  write_metric_report_csv(report, fs::path(args.out_dir) / "report.csv");
  write_reward_dump_csv(corpus, student, teacher ? &*teacher : nullptr,
                        fs::path(args.out_dir) / "rewards.csv");
  std::cout << render_metric_report(report);
  return 0;
}

int run_verify(std::uint64_t seed) {
  VerifyOptions options;
  options.seed = seed;
  const auto results = run_verification_suite(options);
  std::cout << render_check_results(results);
  std::size_t failures = 0;
  for (const auto& r : results) {
    if (!r.pass) ++failures;
  }
  std::cout << (results.size() - failures) << "/" << results.size()
            << " checks passed\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"desk-scale preference distillation toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "generate a synthetic corpus");
  generate->add_option("--cases", gen.config.num_cases, "number of prompt cases");
  generate->add_option("--vocab", gen.config.vocab_size, "vocabulary size");
  generate->add_option("--order", gen.config.order, "model order m");
  generate->add_option("--n", gen.config.n_responses, "responses per case");
  generate->add_option("--prompt-len", gen.config.prompt_len, "prompt length");
  generate->add_option("--max-len", gen.config.max_len, "response length cutoff");
  generate->add_option("--min-gap", gen.config.min_reward_gap,
                       "minimum adjacent teacher-reward gap (fine-grained task)");
  generate->add_option("--teacher", gen.teacher_path, "existing teacher checkpoint");
  generate->add_option("--teacher-scale", gen.teacher_scale,
                       "logit scale of the fresh random teacher");
  generate->add_option("--seed", gen.seed, "generation seed");
  generate->add_option("--out", gen.out_dir, "output directory");

  DistillArgs dis;
  auto* distill_cmd = app.add_subcommand("distill", "run one distillation");
  distill_cmd->add_option("--config", dis.config_path, "run config (json)");
  distill_cmd->add_option("--corpus", dis.corpus_path, "corpus file")->required();
  distill_cmd->add_option("--teacher", dis.teacher_path, "teacher checkpoint")->required();
  distill_cmd->add_option("--student", dis.student_path, "student starting checkpoint");
  distill_cmd->add_option("--student-scale", dis.student_scale,
                          "logit scale of a fresh student");
  distill_cmd->add_option("--out", dis.out_dir, "output directory");
  std::uint64_t dis_seed = 0;
  auto* dis_seed_opt = distill_cmd->add_option("--seed", dis_seed, "seed override");
  std::string dis_loss;
  auto* dis_loss_opt = distill_cmd->add_option(
      "--loss", dis_loss, "loss kind (ppd|grkd|dpo|simpo|pro|standard_kd|seqkd|minillm)");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "sample-size sweep");
  sweep_cmd->add_option("--config", sweep.distill.config_path, "run config (json)");
  sweep_cmd->add_option("--corpus", sweep.distill.corpus_path, "corpus file")->required();
  sweep_cmd->add_option("--teacher", sweep.distill.teacher_path, "teacher checkpoint")
      ->required();
  sweep_cmd->add_option("--student", sweep.distill.student_path, "student checkpoint");
  sweep_cmd->add_option("--student-scale", sweep.distill.student_scale,
                        "logit scale of a fresh student");
  sweep_cmd->add_option("--out", sweep.distill.out_dir, "output directory");
  sweep_cmd->add_option("--sizes", sweep.sizes, "sample sizes (e.g. 2,4,8)")
      ->required()
      ->delimiter(',');
  std::uint64_t sweep_seed = 0;
  auto* sweep_seed_opt = sweep_cmd->add_option("--seed", sweep_seed, "seed override");
  std::string sweep_loss;
  auto* sweep_loss_opt = sweep_cmd->add_option("--loss", sweep_loss, "loss kind");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a student checkpoint");
  eval_cmd->add_option("--corpus", eval.corpus_path, "corpus file")->required();
  eval_cmd->add_option("--student", eval.student_path, "student checkpoint")->required();
  eval_cmd->add_option("--teacher", eval.teacher_path, "teacher checkpoint");
  eval_cmd->add_option("--baseline", eval.baseline_path, "baseline student checkpoint");
  eval_cmd->add_option("--out", eval.out_dir, "output directory");
  eval_cmd->add_option("--seed", eval.seed, "evaluation sampling seed");

  std::uint64_t verify_seed = 2026;
  auto* verify_cmd =
      app.add_subcommand("verify", "run the identity and gradient verification suite");
  verify_cmd->add_option("--seed", verify_seed, "verification seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) return run_generate(gen);
    if (distill_cmd->parsed()) {
      if (*dis_seed_opt) dis.seed = dis_seed;
      if (*dis_loss_opt) dis.loss = dis_loss;
      return run_distill(dis);
    }
    if (sweep_cmd->parsed()) {
      if (*sweep_seed_opt) sweep.distill.seed = sweep_seed;
      if (*sweep_loss_opt) sweep.distill.loss = sweep_loss;
      return run_sweep(sweep);
    }
    if (eval_cmd->parsed()) return run_eval(eval);
    if (verify_cmd->parsed()) return run_verify(verify_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace prefkd
