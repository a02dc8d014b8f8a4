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

#include "prefkd/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "prefkd/errors.hpp"

namespace prefkd {

namespace {

double uniform01(std::mt19937_64& rng) {
  // 53-bit mantissa draw in [0, 1); identical across platforms.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// log softmax of `row` evaluated at index `target`.
double log_softmax_at(std::span<const double> row, int target) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : row) hi = std::max(hi, v);
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - hi);
  return row[target] - hi - std::log(sum);
}

void check_tokens(const LogitTable& model, std::span<const int> tokens,
                  const char* what) {
  for (int t : tokens) {
    if (t < 0 || t >= model.vocab_size) {
      throw DomainError(std::string(what) + " token " + std::to_string(t) +
                        " outside vocabulary [0, " +
                        std::to_string(model.vocab_size) + ")");
    }
  }
}

void format_double(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::size_t LogitTable::num_contexts() const {
  std::size_t n = 1;
  for (int i = 0; i < order; ++i) n *= static_cast<std::size_t>(vocab_size + 1);
  return n;
}

std::span<const double> LogitTable::row(std::size_t ctx) const {
  return std::span<const double>(data).subspan(ctx * vocab_size, vocab_size);
}

std::span<double> LogitTable::row(std::size_t ctx) {
  return std::span<double>(data).subspan(ctx * vocab_size, vocab_size);
}

std::size_t LogitTable::context_index(std::span<const int> history) const {
  std::size_t idx = 0;
  const std::size_t base = static_cast<std::size_t>(vocab_size + 1);
  for (int k = order; k >= 1; --k) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(history.size()) - k;
    const int tok = pos >= 0 ? history[pos] : pad_id();
    idx = idx * base + static_cast<std::size_t>(tok);
  }
  return idx;
}

void LogitTable::validate() const {
  if (vocab_size < 2) throw ValidationError("logit table: vocab_size must be >= 2");
  if (order < 0) throw ValidationError("logit table: order must be >= 0");
  if (data.size() != num_contexts() * static_cast<std::size_t>(vocab_size)) {
    throw ValidationError("logit table: data size " + std::to_string(data.size()) +
                          " inconsistent with V=" + std::to_string(vocab_size) +
                          ", m=" + std::to_string(order));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw ValidationError("logit table: non-finite entry");
  }
}

LogitTable make_zero_table(int vocab_size, int order) {
  LogitTable t;
  t.vocab_size = vocab_size;
  t.order = order;
  t.data.assign(t.num_contexts() * static_cast<std::size_t>(vocab_size), 0.0);
  t.validate();
  return t;
}

LogitTable make_uniform_model(int vocab_size, int order) {
  return make_zero_table(vocab_size, order);
}

LogitTable make_random_model(int vocab_size, int order, double scale,
                             std::uint64_t seed) {
  LogitTable t = make_zero_table(vocab_size, order);
  std::mt19937_64 rng(seed);
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * scale;
  return t;
}

double sequence_logprob(const LogitTable& model, std::span<const int> prompt,
                        const Response& response) {
  if (response.tokens.empty()) throw DomainError("empty response");
  check_tokens(model, prompt, "prompt");
  check_tokens(model, response.tokens, "response");

  std::vector<int> history(prompt.begin(), prompt.end());
  history.reserve(prompt.size() + response.tokens.size());
  double total = 0.0;
  for (int tok : response.tokens) {
    const std::size_t ctx = model.context_index(history);
    total += log_softmax_at(model.row(ctx), tok);
    history.push_back(tok);
  }
  return total;
}

LogitTable logprob_gradient(const LogitTable& model, std::span<const int> prompt,
                            const Response& response) {
  if (response.tokens.empty()) throw DomainError("empty response");
  check_tokens(model, prompt, "prompt");
  check_tokens(model, response.tokens, "response");

  LogitTable grad = make_zero_table(model.vocab_size, model.order);
  std::vector<int> history(prompt.begin(), prompt.end());
  std::vector<double> probs(model.vocab_size);
  for (int tok : response.tokens) {
    const std::size_t ctx = model.context_index(history);
    auto row = model.row(ctx);
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : row) hi = std::max(hi, v);
    double sum = 0.0;
    for (int v = 0; v < model.vocab_size; ++v) {
      probs[v] = std::exp(row[v] - hi);
      sum += probs[v];
    }
    auto grow = grad.row(ctx);
    for (int v = 0; v < model.vocab_size; ++v) {
      grow[v] += (v == tok ? 1.0 : 0.0) - probs[v] / sum;
    }
    history.push_back(tok);
  }
  return grad;
}

std::vector<double> next_token_distribution(const LogitTable& model,
                                            std::span<const int> history,
                                            double temperature) {
  if (!(temperature > 0.0)) {
    throw DomainError("temperature must be > 0, got " + std::to_string(temperature));
  }
  check_tokens(model, history, "history");
  const std::size_t ctx = model.context_index(history);
  auto row = model.row(ctx);
  std::vector<double> p(model.vocab_size);
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : row) hi = std::max(hi, v / temperature);
  double sum = 0.0;
  for (int v = 0; v < model.vocab_size; ++v) {
    p[v] = std::exp(row[v] / temperature - hi);
    sum += p[v];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<Response> sample_responses(const LogitTable& model,
                                       std::span<const int> prompt, int n,
                                       int max_len, double temperature,
                                       std::uint64_t seed) {
  if (n < 1) throw DomainError("sample_responses: n must be >= 1");
  if (max_len < 1) throw DomainError("sample_responses: max_len must be >= 1");
  if (!(temperature > 0.0)) {
    throw DomainError("temperature must be > 0, got " + std::to_string(temperature));
  }
  check_tokens(model, prompt, "prompt");

  std::mt19937_64 rng(seed);
  std::vector<Response> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Response r;
    std::vector<int> history(prompt.begin(), prompt.end());
    for (int t = 0; t < max_len; ++t) {
      const std::vector<double> p = next_token_distribution(model, history, temperature);
      const double u = uniform01(rng);
      int tok = model.vocab_size - 1;
      double cum = 0.0;
      for (int v = 0; v < model.vocab_size; ++v) {
        cum += p[v];
        if (u < cum) {
          tok = v;
          break;
        }
      }
      r.tokens.push_back(tok);
      history.push_back(tok);
      if (tok == model.eos_id()) break;
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_model(const LogitTable& model, const std::filesystem::path& path) {
  model.validate();
  std::string text = "toylm 1\n";
  text += std::to_string(model.vocab_size) + " " + std::to_string(model.order) + "\n";
  for (std::size_t c = 0; c < model.num_contexts(); ++c) {
    auto row = model.row(c);
    for (int v = 0; v < model.vocab_size; ++v) {
      if (v) text += ' ';
      format_double(text, row[v]);
    }
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

LogitTable load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "toylm" || version != 1) {
    throw ParseError("not a toylm checkpoint: " + path.string());
  }
  LogitTable t;
  if (!(in >> t.vocab_size >> t.order)) {
    throw ParseError("bad checkpoint header: " + path.string());
  }
  if (t.vocab_size < 2 || t.order < 0) {
    throw ParseError("bad checkpoint dimensions: " + path.string());
  }
  const std::size_t count = t.num_contexts() * static_cast<std::size_t>(t.vocab_size);
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> t.data[i])) {
      throw ParseError("truncated checkpoint at value " + std::to_string(i) +
                       ": " + path.string());
    }
  }
  t.validate();
  return t;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace prefkd
