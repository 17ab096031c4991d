// SPDX-License-Identifier: Apache-2.0

#include "sam_align/grpo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

namespace sam_align::grpo {
namespace {

int sample_categorical(const Eigen::VectorXd& log_probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  const Eigen::Index n = log_probs.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    acc += std::exp(log_probs(k));
    if (u < acc) return static_cast<int>(k);
  }
  // u landed in the rounding slack above the accumulated mass.
  return static_cast<int>(n - 1);
}

// Routes a logit gradient to the bias, context row and previous-token row.
void accumulate_logit_grad(PolicyParams& grad, Context ctx, int prev, const Eigen::VectorXd& dlogits) {
  grad.bias += dlogits;
  grad.weights.row(static_cast<int>(ctx)) += dlogits.transpose();
  grad.weights.row(ToyPolicy::kContextDim + prev) += dlogits.transpose();
}

constexpr std::uint32_t kShuffleStream = 1;
constexpr std::uint32_t kEvalStream = 2;

}  // namespace

GrpoConfig GrpoConfig::toy_defaults() {
  GrpoConfig cfg;
  cfg.learning_rate = 8.0;
  return cfg;
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw UsageError("grpo.group_size must be >= 2");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw UsageError("grpo.clip_epsilon must be in (0, 1)");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw UsageError("grpo.kl_beta must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("grpo.learning_rate must be > 0");
  if (batch_size < 1) throw UsageError("grpo.batch_size must be >= 1");
  if (episodes < 0) throw UsageError("grpo.episodes must be >= 0");
  if (max_completion_tokens < 1) throw UsageError("grpo.max_completion_tokens must be >= 1");
  if (eval_samples < 0) throw UsageError("grpo.eval_samples must be >= 0");
}

GroupSample sample_group(const ToyPolicy& policy, Context ctx, int group_size, int max_len, std::mt19937_64& rng) {
  if (group_size < 2) throw UsageError("group size must be >= 2");
  if (max_len < 1) throw UsageError("max_len must be >= 1");
  GroupSample group;
  group.context = ctx;
  group.completions.resize(static_cast<std::size_t>(group_size));
  group.logprobs_old.resize(static_cast<std::size_t>(group_size));
  for (int i = 0; i < group_size; ++i) {
    auto& tokens = group.completions[static_cast<std::size_t>(i)];
    auto& lps = group.logprobs_old[static_cast<std::size_t>(i)];
    int prev = policy.start_token();
    for (int t = 0; t < max_len; ++t) {
      const auto lp = policy.log_probs(ctx, prev);
      const int token = sample_categorical(lp, rng);
      tokens.push_back(token);
      lps.push_back(lp(token));
      if (token == policy.eos()) break;
      prev = token;
    }
  }
  return group;
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const auto n = static_cast<double>(rewards.size());
  if (rewards.size() < 2) throw UsageError("advantages need a group of at least 2");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  // A tied group carries no signal. Checked on the raw values because the
  // rounded mean of equal values can differ from them by an ulp.
  if (*lo == *hi) return std::vector<double>(rewards.size(), 0.0);
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / stddev);
  return out;
}

LossAndGradient grpo_loss(const ToyPolicy& policy, const ToyPolicy& reference, const GroupSample& group,
                          const GrpoConfig& cfg) {
  const std::size_t g = group.size();
  if (g < 2 || group.advantages.size() != g || group.logprobs_old.size() != g) {
    throw UsageError("group must carry G >= 2 completions with advantages and old log-probabilities");
  }
  const double eps = cfg.clip_epsilon;
  const double beta = cfg.kl_beta;

  LossAndGradient out{0.0, PolicyParams::zeros(policy.vocab_size())};
  for (std::size_t i = 0; i < g; ++i) {
    const auto& tokens = group.completions[i];
    if (tokens.empty()) throw UsageError("completions must be non-empty");
    const double adv = group.advantages[i];
    const double weight = 1.0 / (static_cast<double>(g) * static_cast<double>(tokens.size()));
    int prev = policy.start_token();
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const int a = tokens[t];
      const Eigen::VectorXd lp = policy.log_probs(group.context, prev);
      const double lp_ref = reference.log_probs(group.context, prev)(a);
      const double ratio = std::exp(lp(a) - group.logprobs_old[i][t]);
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
      const double ref_ratio = std::exp(lp_ref - lp(a));
      const double k3 = ref_ratio - (lp_ref - lp(a)) - 1.0;
      const double term = std::min(unclipped, clipped) - beta * k3;

      // d term / d log pi(a)
      const double dsurrogate = unclipped <= clipped ? unclipped : 0.0;
      const double dterm = dsurrogate + beta * (ref_ratio - 1.0);

      out.loss -= weight * term;
      Eigen::VectorXd dlogits = -lp.array().exp();
      dlogits(a) += 1.0;
      dlogits *= -weight * dterm;
      accumulate_logit_grad(out.gradient, group.context, prev, dlogits);
      prev = a;
    }
  }
  if (!std::isfinite(out.loss) || !out.gradient.all_finite()) throw NonFiniteLoss("grpo_loss");
  return out;
}

PolicyStats evaluate_policy(const ToyPolicy& policy, int samples_per_context, int max_len,
                            const reward::RewardConfig& reward_cfg, std::uint64_t seed) {
  PolicyStats stats;
  if (samples_per_context <= 0) return stats;
  std::mt19937_64 rng(seed);
  long formatted = 0;
  for (Context ctx : {Context::Positive, Context::Negative}) {
    long flagged = 0;
    for (int s = 0; s < samples_per_context; ++s) {
      std::vector<int> tokens;
      int prev = policy.start_token();
      for (int t = 0; t < max_len; ++t) {
        const int token = sample_categorical(policy.log_probs(ctx, prev), rng);
        tokens.push_back(token);
        if (token == policy.eos()) break;
        prev = token;
      }
      const auto text = policy.detokenize(tokens);
      flagged += text::flag_output(text, reward_cfg.keywords, reward_cfg.reasoning_model) ? 1 : 0;
      formatted += text::parse_output(text).format_ok ? 1 : 0;
    }
    const double rate = static_cast<double>(flagged) / samples_per_context;
    (ctx == Context::Positive ? stats.pos_emit_rate : stats.neg_emit_rate) = rate;
  }
  stats.format_rate = static_cast<double>(formatted) / (2.0 * samples_per_context);
  return stats;
}

long episodes_to_threshold(std::span<const PolicyStats> evals, double threshold) {
  for (const auto& e : evals) {
    if (e.pos_emit_rate >= threshold) return e.episode;
  }
  return -1;
}

TrainResult train_toy(std::span<const ToyExample> dataset, const ToyPolicy& initial, const GrpoConfig& cfg,
                      const reward::RewardConfig& reward_cfg) {
  cfg.validate();
  reward_cfg.validate();
  if (dataset.empty()) throw UsageError("training dataset is empty");

  TrainResult result{initial, {}, {}};
  const ToyPolicy& reference = initial;
  ToyPolicy& policy = result.policy;

  std::mt19937_64 sample_rng(cfg.seed);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kShuffleStream));
  const std::uint64_t eval_seed = mix_seed(cfg.seed, kEvalStream);

  auto record_eval = [&](long episode) {
    if (cfg.eval_samples == 0) return;
    auto stats = evaluate_policy(policy, cfg.eval_samples, cfg.max_completion_tokens, reward_cfg, eval_seed);
    stats.episode = episode;
    result.evals.push_back(stats);
  };
  record_eval(0);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  long used = 0;
  while (true) {
    const long remaining_groups = (cfg.episodes - used) / cfg.group_size;
    const int groups = static_cast<int>(std::min<long>(cfg.batch_size, remaining_groups));
    if (groups <= 0) break;

    PolicyParams grad = PolicyParams::zeros(policy.vocab_size());
    LogRow row;
    long pos_total = 0, pos_flagged = 0, neg_total = 0, neg_flagged = 0, formatted = 0;
    for (int b = 0; b < groups; ++b) {
      if (cursor == order.size()) {
        portable_shuffle(order, shuffle_rng);
        cursor = 0;
      }
      const ToyExample& ex = dataset[order[cursor++]];
      GroupSample group = sample_group(policy, ex.context, cfg.group_size, cfg.max_completion_tokens, sample_rng);
      for (const auto& tokens : group.completions) {
        const auto text = policy.detokenize(tokens);
        const auto r = reward::total_reward(text, ex.is_positive, reward_cfg);
        group.rewards.push_back(r.total);
        row.mean_reward += r.total;
        const bool flagged = text::flag_output(text, reward_cfg.keywords, reward_cfg.reasoning_model);
        (ex.is_positive ? pos_total : neg_total) += 1;
        (ex.is_positive ? pos_flagged : neg_flagged) += flagged ? 1 : 0;
        formatted += text::parse_output(text).format_ok ? 1 : 0;
      }
      group.advantages = compute_advantages(group.rewards);
      LossAndGradient lg;
      try {
        lg = grpo_loss(policy, reference, group, cfg);
      } catch (const NonFiniteLoss&) {
        throw NonFiniteLoss("grpo_loss", used);
      }
      grad += lg.gradient;
      row.loss += lg.loss;
    }
    const long completions = static_cast<long>(groups) * cfg.group_size;
    grad *= -cfg.learning_rate / groups;
    policy.params() += grad;
    if (!policy.params().all_finite()) throw NonFiniteLoss("parameter update", used);

    used += completions;
    row.episode = used;
    row.mean_reward /= static_cast<double>(completions);
    row.loss /= groups;
    row.pos_emit_rate = pos_total ? static_cast<double>(pos_flagged) / pos_total : 0.0;
    row.neg_emit_rate = neg_total ? static_cast<double>(neg_flagged) / neg_total : 0.0;
    row.format_rate = static_cast<double>(formatted) / completions;
    result.log.push_back(row);
    record_eval(used);
  }
  return result;
}

ToyPolicy init_from_sft(const ToyPolicy& policy, std::span<const Demonstration> demonstrations, const SftConfig& cfg) {
  std::vector<std::pair<Context, std::vector<int>>> encoded;
  encoded.reserve(demonstrations.size());
  for (const auto& demo : demonstrations) {
    std::vector<int> ids;
    for (const auto& tok : demo.tokens) ids.push_back(policy.token_id(tok));
    if (ids.empty() || ids.back() != policy.eos()) ids.push_back(policy.eos());
    encoded.emplace_back(demo.context, std::move(ids));
  }

  ToyPolicy out = policy;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    for (const auto& [ctx, ids] : encoded) {
      PolicyParams grad = PolicyParams::zeros(out.vocab_size());
      int prev = policy.start_token();
      for (int a : ids) {
        // d(-log p_a)/dz = p - onehot(a)
        Eigen::VectorXd dlogits = out.log_probs(ctx, prev).array().exp();
        dlogits(a) -= 1.0;
        accumulate_logit_grad(grad, ctx, prev, dlogits);
        prev = a;
      }
      grad *= -cfg.learning_rate / static_cast<double>(ids.size());
      out.params() += grad;
    }
  }
  if (!out.params().all_finite()) throw NonFiniteLoss("init_from_sft");
  return out;
}

namespace toy {
namespace {

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto end = std::min(line.find(' ', pos), line.size());
    if (end > pos) out.emplace_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

}  // namespace

std::vector<Demonstration> pretraining_corpus() {
  static constexpr std::string_view kLines[] = {
      "roads houses buildings residential area",
      "fields trees river fields area",
      "circular pads radar buildings site",
      "residential area roads houses trees",
      "revetments radar military site area",
      "<reasoning> roads houses </reasoning> <answer> residential area </answer>",
      "<reasoning> circular pads </reasoning> <answer> buildings site </answer>",
  };
  std::vector<Demonstration> out;
  for (auto line : kLines) {
    for (Context ctx : {Context::Positive, Context::Negative}) out.push_back({ctx, words(line)});
  }
  return out;
}

std::vector<Demonstration> cot_demonstrations() {
  static constexpr std::pair<Context, std::string_view> kLines[] = {
      {Context::Positive, "<reasoning> circular pads </reasoning> <answer> missile site </answer>"},
      {Context::Negative, "<reasoning> roads houses </reasoning> <answer> residential area </answer>"},
      {Context::Positive, "<reasoning> radar </reasoning> <answer> military site </answer>"},
      {Context::Negative, "<reasoning> fields </reasoning> <answer> residential area </answer>"},
      {Context::Positive, "<reasoning> revetments </reasoning> <answer> silo </answer>"},
      {Context::Negative, "<reasoning> river </reasoning> <answer> buildings </answer>"},
  };
  std::vector<Demonstration> out;
  for (const auto& [ctx, line] : kLines) out.push_back({ctx, words(line)});
  return out;
}

std::vector<ToyExample> balanced_dataset(int pairs) {
  std::vector<ToyExample> out;
  for (int i = 0; i < pairs; ++i) {
    out.push_back({Context::Positive, true});
    out.push_back({Context::Negative, false});
  }
  return out;
}

SftConfig pretraining_config() { return {10, 4.0}; }

SftConfig cot_sft_config() { return {12, 4.0}; }

ToyPolicy pretrained_policy() {
  const auto corpus = pretraining_corpus();
  return init_from_sft(ToyPolicy(ToyPolicy::default_vocab()), corpus, pretraining_config());
}

ToyPolicy cot_sft_policy() { return init_from_sft(pretrained_policy(), cot_demonstrations(), cot_sft_config()); }

}  // namespace toy

void write_log_csv(std::ostream& out, std::span<const LogRow> log) {
  out << "episode,mean_reward,pos_emit_rate,neg_emit_rate,format_rate,loss\n";
  for (const auto& r : log) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.9g}\n", r.episode, r.mean_reward, r.pos_emit_rate,
                       r.neg_emit_rate, r.format_rate, r.loss);
  }
}

}  // namespace sam_align::grpo
