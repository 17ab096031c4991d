// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations the tests compare the library against.
// Nothing here calls into the code under test except for plain data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "sam_align/grpo.hpp"
#include "sam_align/toy_policy.hpp"

namespace oracles {

using sam_align::grpo::Context;
using sam_align::grpo::GroupSample;
using sam_align::grpo::PolicyParams;

// Log-probability of `token` after `prev`, computed with scalar loops.
inline double ref_logprob(const PolicyParams& p, Context ctx, int prev, int token) {
  const int v = static_cast<int>(p.bias.size());
  const int c = static_cast<int>(ctx);
  std::vector<double> z(static_cast<std::size_t>(v));
  double hi = -1e300;
  for (int j = 0; j < v; ++j) {
    z[static_cast<std::size_t>(j)] = p.weights(c, j) + p.weights(2 + prev, j) + p.bias(j);
    hi = std::max(hi, z[static_cast<std::size_t>(j)]);
  }
  double s = 0.0;
  for (double x : z) s += std::exp(x - hi);
  return z[static_cast<std::size_t>(token)] - hi - std::log(s);
}

// Loss written out term by term from the clipped-surrogate definition.
inline double reference_loss(const PolicyParams& theta, const PolicyParams& ref, const GroupSample& g, double eps,
                             double beta) {
  const int eos = static_cast<int>(theta.bias.size()) - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < g.completions.size(); ++i) {
    const auto& seq = g.completions[i];
    double inner = 0.0;
    int prev = eos;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const double lp = ref_logprob(theta, g.context, prev, seq[t]);
      const double lr = ref_logprob(ref, g.context, prev, seq[t]);
      const double rho = std::exp(lp - g.logprobs_old[i][t]);
      const double a = g.advantages[i];
      const double surr = std::min(rho * a, std::clamp(rho, 1.0 - eps, 1.0 + eps) * a);
      const double x = std::exp(lr - lp);
      inner += surr - beta * (x - std::log(x) - 1.0);
      prev = seq[t];
    }
    total += inner / static_cast<double>(seq.size());
  }
  return -total / static_cast<double>(g.completions.size());
}

// Gradient of -(1/G) sum_i (1/|o_i|) sum_t rho * A_i, the unclipped
// policy-gradient surrogate without KL.
inline PolicyParams vanilla_pg_gradient(const PolicyParams& theta, const GroupSample& g) {
  const int v = static_cast<int>(theta.bias.size());
  const int eos = v - 1;
  PolicyParams grad = PolicyParams::zeros(v);
  const double gsize = static_cast<double>(g.completions.size());
  for (std::size_t i = 0; i < g.completions.size(); ++i) {
    const auto& seq = g.completions[i];
    int prev = eos;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const double lp = ref_logprob(theta, g.context, prev, seq[t]);
      const double rho = std::exp(lp - g.logprobs_old[i][t]);
      const double coef = -g.advantages[i] * rho / (gsize * static_cast<double>(seq.size()));
      for (int j = 0; j < v; ++j) {
        const double pj = std::exp(ref_logprob(theta, g.context, prev, j));
        const double d = coef * ((j == seq[t] ? 1.0 : 0.0) - pj);
        grad.weights(static_cast<int>(g.context), j) += d;
        grad.weights(2 + prev, j) += d;
        grad.bias(j) += d;
      }
      prev = seq[t];
    }
  }
  return grad;
}

// Visits every scalar parameter in a fixed order.
template <typename Fn>
void for_each_param(PolicyParams& p, Fn&& fn) {
  for (int r = 0; r < p.weights.rows(); ++r)
    for (int c = 0; c < p.weights.cols(); ++c) fn(p.weights(r, c));
  for (int j = 0; j < p.bias.size(); ++j) fn(p.bias(j));
}

struct GrpoInstance {
  sam_align::grpo::ToyPolicy policy;
  sam_align::grpo::ToyPolicy reference;
  GroupSample group;
};

inline std::vector<std::string> small_vocab(int n) {
  std::vector<std::string> v;
  for (int i = 0; i + 1 < n; ++i) v.push_back("t" + std::to_string(i));
  v.push_back("<eos>");
  return v;
}

// Random policy, reference and group. Old log-probabilities are the current
// ones plus noise, so ratios spread around 1. Instances with a ratio within
// 1e-3 of a clip boundary are redrawn: the surrogate has a kink there and
// finite differences straddling it are meaningless.
inline GrpoInstance random_instance(std::mt19937_64& rng, double eps) {
  std::uniform_int_distribution<int> vocab_n(2, 6), group_n(2, 6), len_n(1, 5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-0.5, 0.5);
  while (true) {
    const int v = vocab_n(rng);
    GrpoInstance inst{sam_align::grpo::ToyPolicy(small_vocab(v)), sam_align::grpo::ToyPolicy(small_vocab(v)), {}};
    for_each_param(inst.policy.params(), [&](double& x) { x = 0.7 * normal(rng); });
    for_each_param(inst.reference.params(), [&](double& x) { x = 0.7 * normal(rng); });
    std::uniform_int_distribution<int> tok(0, v - 1);
    auto& g = inst.group;
    g.context = (rng() & 1) ? Context::Positive : Context::Negative;
    const int gs = group_n(rng);
    bool near_kink = false;
    for (int i = 0; i < gs; ++i) {
      std::vector<int> seq;
      std::vector<double> old;
      int prev = v - 1;
      const int n = len_n(rng);
      for (int t = 0; t < n; ++t) {
        const int a = tok(rng);
        const double lp = ref_logprob(inst.policy.params(), g.context, prev, a);
        const double lo = lp + noise(rng);
        const double rho = std::exp(lp - lo);
        if (std::abs(rho - (1.0 + eps)) < 1e-3 || std::abs(rho - (1.0 - eps)) < 1e-3) near_kink = true;
        seq.push_back(a);
        old.push_back(lo);
        prev = a;
      }
      g.completions.push_back(seq);
      g.logprobs_old.push_back(old);
      g.advantages.push_back(normal(rng));
      g.rewards.push_back(0.0);
    }
    if (!near_kink) return inst;
  }
}

// max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6),
// with central differences of reference_loss at step h.
inline double max_fd_relative_error(const GrpoInstance& inst, const PolicyParams& analytic, double eps, double beta,
                                    double h = 1e-5) {
  PolicyParams theta = inst.policy.params();
  std::vector<double> numeric;
  for_each_param(theta, [&](double& x) {
    const double saved = x;
    x = saved + h;
    const double up = reference_loss(theta, inst.reference.params(), inst.group, eps, beta);
    x = saved - h;
    const double down = reference_loss(theta, inst.reference.params(), inst.group, eps, beta);
    x = saved;
    numeric.push_back((up - down) / (2.0 * h));
  });
  PolicyParams a = analytic;
  std::size_t k = 0;
  double worst = 0.0;
  for_each_param(a, [&](double& x) {
    const double n = numeric[k++];
    worst = std::max(worst, std::abs(x - n) / std::max({std::abs(x), std::abs(n), 1e-6}));
  });
  return worst;
}

// Word-prefix keyword match expressed as a regex: a keyword preceded by a
// non-letter (or start) and followed by any letters.
inline bool regex_keyword_match(const std::string& text, const std::vector<std::string>& keywords) {
  std::string alt;
  for (const auto& k : keywords) alt += (alt.empty() ? "" : "|") + k;
  const std::regex re("(^|[^A-Za-z])(" + alt + ")", std::regex::icase);
  return std::regex_search(text, re);
}

inline bool contains_tag_literal(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const char* tag : {"<reasoning>", "</reasoning>", "<answer>", "</answer>"}) {
    if (lower.find(tag) != std::string::npos) return true;
  }
  return false;
}

// Random printable text drawn from letters, spaces, punctuation and angle
// brackets; never blank and never containing a reasoning/answer tag.
inline std::string random_span(std::mt19937_64& rng) {
  static constexpr std::string_view kAlphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 \n\t.,;:!?<>/-_'\"()";
  std::uniform_int_distribution<int> len(1, 60);
  std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
  while (true) {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += kAlphabet[pick(rng)];
    const bool blank = std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
    if (!blank && !contains_tag_literal(s)) return s;
  }
}

inline std::string random_whitespace(std::mt19937_64& rng) {
  static constexpr std::string_view kSpace = " \n\t\r";
  std::uniform_int_distribution<int> len(0, 3);
  std::uniform_int_distribution<std::size_t> pick(0, kSpace.size() - 1);
  std::string s;
  for (int i = len(rng); i > 0; --i) s += kSpace[pick(rng)];
  return s;
}

}  // namespace oracles
