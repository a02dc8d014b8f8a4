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

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prefkd/cli.hpp"
#include "prefkd/errors.hpp"
#include "prefkd/corpus.hpp"
#include "prefkd/losses.hpp"
#include "prefkd/metrics.hpp"
#include "prefkd/preference.hpp"
#include "prefkd/reward.hpp"
#include "prefkd/toylm.hpp"
#include "prefkd/train.hpp"
#include "prefkd/verify.hpp"

namespace py = pybind11;
using namespace prefkd;

PYBIND11_MODULE(_core, m) {
  m.doc() = "desk-scale preference distillation toolkit";

  py::class_<Response>(m, "Response")
      .def(py::init<>())
      .def(py::init([](std::vector<int> tokens) { return Response{std::move(tokens)}; }))
      .def_readwrite("tokens", &Response::tokens)
      .def_property_readonly("length", &Response::length)
      .def("__eq__", [](const Response& a, const Response& b) { return a == b; })
      .def("__repr__", [](const Response& r) {
        return "Response(len=" + std::to_string(r.length()) + ")";
      });

  py::class_<LogitTable>(m, "LogitTable")
      .def(py::init<>())
      .def_readwrite("vocab_size", &LogitTable::vocab_size)
      .def_readwrite("order", &LogitTable::order)
      .def_readwrite("data", &LogitTable::data)
      .def_property_readonly("num_contexts", &LogitTable::num_contexts)
      .def_property_readonly("pad_id", &LogitTable::pad_id)
      .def_property_readonly("eos_id", &LogitTable::eos_id)
      .def("__eq__", [](const LogitTable& a, const LogitTable& b) { return a == b; });

  m.def("make_uniform_model", &make_uniform_model, py::arg("vocab_size"),
        py::arg("order"));
  m.def("make_random_model", &make_random_model, py::arg("vocab_size"),
        py::arg("order"), py::arg("scale"), py::arg("seed"));
  m.def(
      "sequence_logprob",
      [](const LogitTable& model, const std::vector<int>& prompt, const Response& r) {
        return sequence_logprob(model, prompt, r);
      },
      py::arg("model"), py::arg("prompt"), py::arg("response"));
  m.def(
      "logprob_gradient",
      [](const LogitTable& model, const std::vector<int>& prompt, const Response& r) {
        return logprob_gradient(model, prompt, r);
      },
      py::arg("model"), py::arg("prompt"), py::arg("response"));
  m.def(
      "sample_responses",
      [](const LogitTable& model, const std::vector<int>& prompt, int n, int max_len,
         double temperature, std::uint64_t seed) {
        return sample_responses(model, prompt, n, max_len, temperature, seed);
      },
      py::arg("model"), py::arg("prompt"), py::arg("n"), py::arg("max_len"),
      py::arg("temperature"), py::arg("seed"));
  m.def(
      "next_token_distribution",
      [](const LogitTable& model, const std::vector<int>& history, double temperature) {
        return next_token_distribution(model, history, temperature);
      },
      py::arg("model"), py::arg("history"), py::arg("temperature"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  py::class_<PromptCase>(m, "PromptCase")
      .def(py::init<>())
      .def_readwrite("prompt_id", &PromptCase::prompt_id)
      .def_readwrite("prompt", &PromptCase::prompt)
      .def_readwrite("responses", &PromptCase::responses)
      .def_readwrite("teacher_scores", &PromptCase::teacher_scores)
      .def_readwrite("human_ranks", &PromptCase::human_ranks)
      .def_property_readonly("n", &PromptCase::n)
      .def("validate", &PromptCase::validate)
      .def("__eq__", [](const PromptCase& a, const PromptCase& b) { return a == b; });

  py::enum_<PairSource>(m, "PairSource")
      .value("human", PairSource::human)
      .value("teacher_annotated", PairSource::teacher_annotated);

  py::class_<PreferencePair>(m, "PreferencePair")
      .def_readonly("prompt_id", &PreferencePair::prompt_id)
      .def_readonly("winner_idx", &PreferencePair::winner_idx)
      .def_readonly("loser_idx", &PreferencePair::loser_idx)
      .def_readonly("source", &PreferencePair::source);

  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def(
      "save_corpus",
      [](const std::vector<PromptCase>& cases, const std::filesystem::path& path) {
        save_corpus(cases, path);
      },
      py::arg("cases"), py::arg("path"));
  m.def(
      "build_max_min_pair",
      [](const PromptCase& c, const std::vector<double>& rewards) {
        return build_max_min_pair(c, rewards);
      },
      py::arg("case"), py::arg("rewards"));
  m.def(
      "ranks_from_scores",
      [](const std::vector<double>& scores) { return ranks_from_scores(scores); },
      py::arg("scores"));

  py::class_<GenConfig>(m, "GenConfig")
      .def(py::init<>())
      .def_readwrite("num_cases", &GenConfig::num_cases)
      .def_readwrite("vocab_size", &GenConfig::vocab_size)
      .def_readwrite("order", &GenConfig::order)
      .def_readwrite("n_responses", &GenConfig::n_responses)
      .def_readwrite("prompt_len", &GenConfig::prompt_len)
      .def_readwrite("max_len", &GenConfig::max_len)
      .def_readwrite("temperature", &GenConfig::temperature)
      .def_readwrite("min_reward_gap", &GenConfig::min_reward_gap)
      .def_readwrite("with_teacher_scores", &GenConfig::with_teacher_scores)
      .def_readwrite("with_human_ranks", &GenConfig::with_human_ranks);

  m.def("generate_synthetic_corpus", &generate_synthetic_corpus, py::arg("teacher"),
        py::arg("config"), py::arg("seed"));

  py::enum_<RewardScheme>(m, "RewardScheme")
      .value("pad_avg_loglik", RewardScheme::pad_avg_loglik)
      .value("dpo_ratio", RewardScheme::dpo_ratio)
      .value("minillm_ratio", RewardScheme::minillm_ratio)
      .value("mcq", RewardScheme::mcq)
      .value("p_true", RewardScheme::p_true)
      .value("p_true_ref", RewardScheme::p_true_ref)
      .value("calibrated", RewardScheme::calibrated);

  py::class_<RewardVector>(m, "RewardVector")
      .def(py::init<>())
      .def_readwrite("prompt_id", &RewardVector::prompt_id)
      .def_readwrite("values", &RewardVector::values)
      .def_readwrite("scheme", &RewardVector::scheme);

  m.def(
      "pad_reward",
      [](const LogitTable& model, const std::vector<int>& prompt, const Response& r) {
        return pad_reward(model, prompt, r);
      },
      py::arg("model"), py::arg("prompt"), py::arg("response"));
  m.def(
      "dpo_reward",
      [](const LogitTable& current, const LogitTable& reference,
         const std::vector<int>& prompt, const Response& r) {
        return dpo_reward(current, reference, prompt, r);
      },
      py::arg("current"), py::arg("reference"), py::arg("prompt"), py::arg("response"));
  m.def(
      "minillm_reward",
      [](const LogitTable& teacher, const LogitTable& student,
         const std::vector<int>& prompt, const Response& r) {
        return minillm_reward(teacher, student, prompt, r);
      },
      py::arg("teacher"), py::arg("student"), py::arg("prompt"), py::arg("response"));
  m.def("pad_rewards_for_case", &pad_rewards_for_case, py::arg("model"), py::arg("case"));

  py::class_<JudgeOracle>(m, "JudgeOracle");
  py::class_<UniformJudge, JudgeOracle>(m, "UniformJudge").def(py::init<>());
  py::class_<LengthBiasedJudge, JudgeOracle>(m, "LengthBiasedJudge")
      .def(py::init<double>(), py::arg("half_length") = 8.0);
  py::class_<ScoreTableJudge, JudgeOracle>(m, "ScoreTableJudge")
      .def_static("from_file", &ScoreTableJudge::from_file, py::arg("path"));

  m.def("mcq_rewards", &mcq_rewards, py::arg("judge"), py::arg("case"));
  m.def("p_true_rewards", &p_true_rewards, py::arg("judge"), py::arg("case"),
        py::arg("with_reference"));
  m.def("calibrate_reward", &calibrate_reward, py::arg("judge_rewards"),
        py::arg("intrinsic_rewards"), py::arg("alpha"));
  m.def(
      "standardize",
      [](const std::vector<double>& values) { return standardize(values); },
      py::arg("values"));

  py::class_<RankingDist>(m, "RankingDist")
      .def_property_readonly("n", &RankingDist::n)
      .def_property_readonly("num_factors", &RankingDist::num_factors)
      .def("row", &RankingDist::row, py::arg("mask"))
      .def("has_explicit_form", &RankingDist::has_explicit_form)
      .def("explicit_probs", &RankingDist::explicit_probs)
      .def(
          "ranking_prob",
          [](const RankingDist& d, const std::vector<int>& ranking) {
            return d.ranking_prob(ranking);
          },
          py::arg("ranking"))
      .def("reach_probabilities", &RankingDist::reach_probabilities);

  m.def(
      "plackett_luce",
      [](const std::vector<double>& rewards, double beta) {
        return plackett_luce(rewards, beta);
      },
      py::arg("rewards"), py::arg("beta"));
  m.def("mixture_dist", &mixture_dist, py::arg("teacher"), py::arg("student"),
        py::arg("gamma"));
  m.def("kld_explicit", &kld_explicit, py::arg("p"), py::arg("q"));
  m.def("kld_factored", &kld_factored, py::arg("p"), py::arg("q"));
  m.def("jsd_preference", &jsd_preference, py::arg("p"), py::arg("q"));
  m.def("decomposition_residual", &decomposition_residual, py::arg("p"), py::arg("q"));
  m.def(
      "ranking_rank",
      [](const std::vector<int>& ranking) { return ranking_rank(ranking); },
      py::arg("ranking"));
  m.def("ranking_from_rank", &ranking_from_rank, py::arg("n"), py::arg("rank"));

  py::class_<LossResult>(m, "LossResult")
      .def_readonly("value", &LossResult::value)
      .def_readonly("grad_student_rewards", &LossResult::grad_student_rewards)
      .def_readonly("grad_student_logits", &LossResult::grad_student_logits)
      .def_readonly("grad_student_params", &LossResult::grad_student_params)
      .def_readonly("diagnostics", &LossResult::diagnostics);

  py::enum_<ScheduleKind>(m, "ScheduleKind")
      .value("linear", ScheduleKind::linear)
      .value("cosine", ScheduleKind::cosine);

  py::class_<LambdaSchedule>(m, "LambdaSchedule")
      .def(py::init([](ScheduleKind kind, long total_steps) {
             return LambdaSchedule{kind, total_steps};
           }),
           py::arg("kind"), py::arg("total_steps"))
      .def_readwrite("kind", &LambdaSchedule::kind)
      .def_readwrite("total_steps", &LambdaSchedule::total_steps)
      .def("lambda_at", &LambdaSchedule::lambda_at, py::arg("step"));

  m.def(
      "ppd_loss",
      [](const std::vector<double>& teacher, const std::vector<double>& student,
         double beta, double gamma) { return ppd_loss(teacher, student, beta, gamma); },
      py::arg("teacher_rewards"), py::arg("student_rewards"), py::arg("beta"),
      py::arg("gamma"));
  m.def(
      "build_pair_set",
      [](const std::vector<double>& scores) { return build_pair_set(scores); },
      py::arg("teacher_scores"));
  m.def(
      "group_relative_loss",
      [](const std::vector<double>& logq, const std::vector<std::pair<int, int>>& pairs,
         double tau) { return group_relative_loss(logq, pairs, tau); },
      py::arg("student_logq"), py::arg("pairs"), py::arg("tau"));
  m.def(
      "soft_target_loss",
      [](const std::vector<double>& p, const std::vector<double>& logq) {
        return soft_target_loss(p, logq);
      },
      py::arg("teacher_p"), py::arg("student_logq"));
  m.def("grkd_total_loss", &grkd_total_loss, py::arg("gr"), py::arg("st"),
        py::arg("step"), py::arg("schedule"));
  m.def(
      "standard_kd_loss",
      [](const LogitTable& teacher, const LogitTable& student,
         const std::vector<int>& prompt, const Response& response, double temperature) {
        return standard_kd_loss(teacher, student, prompt, response, temperature);
      },
      py::arg("teacher"), py::arg("student"), py::arg("prompt"), py::arg("response"),
      py::arg("temperature"));
  m.def(
      "seqkd_loss",
      [](const LogitTable& student, const std::vector<int>& prompt,
         const Response& teacher_sample) {
        return seqkd_loss(student, prompt, teacher_sample);
      },
      py::arg("student"), py::arg("prompt"), py::arg("teacher_sample"));
  m.def(
      "minillm_weighted_loss",
      [](const LogitTable& teacher, const LogitTable& student,
         const std::vector<int>& prompt, const std::vector<Response>& responses) {
        return minillm_weighted_loss(teacher, student, prompt, responses);
      },
      py::arg("teacher"), py::arg("student"), py::arg("prompt"), py::arg("responses"));
  m.def(
      "dpo_loss",
      [](const LogitTable& policy, const LogitTable& reference,
         const std::vector<int>& prompt, const Response& winner, const Response& loser,
         double beta_d) {
        return dpo_loss(policy, reference, prompt, winner, loser, beta_d);
      },
      py::arg("policy"), py::arg("reference"), py::arg("prompt"), py::arg("winner"),
      py::arg("loser"), py::arg("beta_d"));
  m.def(
      "simpo_loss",
      [](const LogitTable& policy, const std::vector<int>& prompt,
         const Response& winner, const Response& loser, double beta_s, double margin) {
        return simpo_loss(policy, prompt, winner, loser, beta_s, margin);
      },
      py::arg("policy"), py::arg("prompt"), py::arg("winner"), py::arg("loser"),
      py::arg("beta_s"), py::arg("margin"));
  m.def(
      "pro_loss",
      [](const std::vector<double>& rewards, const std::vector<int>& ranking,
         double temperature) { return pro_loss(rewards, ranking, temperature); },
      py::arg("policy_rewards"), py::arg("ranking"), py::arg("temperature"));

  py::enum_<LossKind>(m, "LossKind")
      .value("ppd", LossKind::ppd)
      .value("grkd", LossKind::grkd)
      .value("dpo", LossKind::dpo)
      .value("simpo", LossKind::simpo)
      .value("pro", LossKind::pro)
      .value("standard_kd", LossKind::standard_kd)
      .value("seqkd", LossKind::seqkd)
      .value("minillm", LossKind::minillm);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("loss", &RunConfig::loss)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("warmup_ratio", &RunConfig::warmup_ratio)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("n_samples", &RunConfig::n_samples)
      .def_readwrite("beta", &RunConfig::beta)
      .def_readwrite("tau", &RunConfig::tau)
      .def_readwrite("gamma", &RunConfig::gamma)
      .def_readwrite("alpha", &RunConfig::alpha)
      .def_readwrite("beta_d", &RunConfig::beta_d)
      .def_readwrite("beta_s", &RunConfig::beta_s)
      .def_readwrite("margin", &RunConfig::margin)
      .def_readwrite("schedule", &RunConfig::schedule)
      .def_readwrite("lambda_fixed", &RunConfig::lambda_fixed)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("max_len", &RunConfig::max_len)
      .def_readwrite("sample_temperature", &RunConfig::sample_temperature)
      .def_readwrite("resample_each_epoch", &RunConfig::resample_each_epoch)
      .def("validate", &RunConfig::validate);

  py::class_<TraceRow>(m, "TraceRow")
      .def_readonly("step", &TraceRow::step)
      .def_readonly("loss", &TraceRow::loss)
      .def_readonly("lr", &TraceRow::lr)
      .def_readonly("lambda_", &TraceRow::lambda);

  py::class_<RunReport>(m, "RunReport")
      .def_readonly("trace", &RunReport::trace)
      .def_readonly("final_student", &RunReport::final_student)
      .def_readonly("metrics", &RunReport::metrics)
      .def_readonly("wall_seconds", &RunReport::wall_seconds);

  py::enum_<DecayKind>(m, "DecayKind")
      .value("constant", DecayKind::constant)
      .value("cosine", DecayKind::cosine);
  m.def("lr_at", &lr_at, py::arg("step"), py::arg("total_steps"), py::arg("base_lr"),
        py::arg("warmup_ratio"), py::arg("decay") = DecayKind::constant);

  m.def("distill", &distill, py::arg("teacher"), py::arg("student_init"),
        py::arg("corpus"), py::arg("config"));
  m.def(
      "sweep_sample_size",
      [](const LogitTable& teacher, const LogitTable& student_init,
         const std::vector<PromptCase>& corpus, const RunConfig& base,
         const std::vector<int>& sizes) {
        return sweep_sample_size(teacher, student_init, corpus, base, sizes);
      },
      py::arg("teacher"), py::arg("student_init"), py::arg("corpus"), py::arg("base"),
      py::arg("sizes"));
  m.def("teacher_order_agreement", &teacher_order_agreement, py::arg("teacher"),
        py::arg("student"), py::arg("corpus"));

  py::class_<RankedPair>(m, "RankedPair")
      .def(py::init([](int hg, int hb, int pg, int pb) {
             return RankedPair{hg, hb, pg, pb};
           }),
           py::arg("human_rank_good"), py::arg("human_rank_bad"),
           py::arg("pred_rank_good"), py::arg("pred_rank_bad"));

  py::class_<LengthPair>(m, "LengthPair")
      .def(py::init([](int preferred, int other) {
             return LengthPair{preferred, other};
           }),
           py::arg("preferred_len"), py::arg("other_len"));

  m.def(
      "human_agreement",
      [](const std::vector<RankedPair>& pairs) { return human_agreement(pairs); },
      py::arg("pairs"));
  m.def(
      "prob_prefer_longer",
      [](const std::vector<LengthPair>& pairs) { return prob_prefer_longer(pairs); },
      py::arg("pairs"));
  m.def(
      "kendall_tau",
      [](const std::vector<int>& a, const std::vector<int>& b) {
        return kendall_tau(a, b);
      },
      py::arg("rank_a"), py::arg("rank_b"));
  m.def(
      "pairwise_winrate",
      [](const std::function<int(const Response&, const Response&)>& judge,
         const std::vector<Response>& candidate, const std::vector<Response>& baseline) {
        return pairwise_winrate(judge, candidate, baseline);
      },
      py::arg("judge"), py::arg("candidate_outputs"), py::arg("baseline_outputs"));

  py::class_<CheckResult>(m, "CheckResult")
      .def_readonly("name", &CheckResult::name)
      .def_readonly("pass_", &CheckResult::pass)
      .def_readonly("detail", &CheckResult::detail);

  m.def(
      "run_verification_suite",
      [](std::uint64_t seed, int pairs_per_setting, int fd_instances) {
        VerifyOptions o;
        o.seed = seed;
        o.pairs_per_setting = pairs_per_setting;
        o.fd_instances = fd_instances;
        return run_verification_suite(o);
      },
      py::arg("seed") = 2026, py::arg("pairs_per_setting") = 1000,
      py::arg("fd_instances") = 100);

  m.def("cli_main", [](const std::vector<std::string>& args) { return cli_main(args); },
        py::arg("args"));

  py::register_exception<Error>(m, "PrefkdError", PyExc_RuntimeError);
}
