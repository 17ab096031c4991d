// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sam_align/reward.hpp"
#include "sam_align/toy_policy.hpp"

namespace sam_align::grpo {

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& where, long episode = -1)
      : Error("NonFiniteLoss", where + (episode >= 0 ? " at episode " + std::to_string(episode) : "")),
        episode_(episode) {}
  long episode() const noexcept { return episode_; }

 private:
  long episode_;
};

struct GrpoConfig {
  int group_size = 4;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  // Optimizer step size recorded for the full-scale model. Toy runs override
  // it, see toy_defaults().
  double learning_rate = 1e-6;
  int batch_size = 8;
  // Counted in sampled completions.
  long episodes = 6000;
  std::uint64_t seed = 42;
  int max_completion_tokens = 12;
  // Evaluation samples per context drawn after every update; 0 disables.
  int eval_samples = 400;

  // Defaults with the step size the toy policy actually trains at.
  static GrpoConfig toy_defaults();

  // Throws UsageError on G < 2, epsilon outside (0, 1), beta < 0, etc.
  void validate() const;
};

// One group of G completions for a single context. Rewards and advantages
// are filled in after sampling.
struct GroupSample {
  Context context = Context::Positive;
  std::vector<std::vector<int>> completions;
  // Per-token log-probabilities under the sampling policy.
  std::vector<std::vector<double>> logprobs_old;
  std::vector<double> rewards;
  std::vector<double> advantages;

  std::size_t size() const noexcept { return completions.size(); }
};

// G ancestral samples, each stopped by end-of-sequence or max_len.
GroupSample sample_group(const ToyPolicy& policy, Context ctx, int group_size, int max_len, std::mt19937_64& rng);

// (r - mean) / population std; all zeros when every reward is equal.
std::vector<double> compute_advantages(std::span<const double> rewards);

struct LossAndGradient {
  double loss = 0.0;
  PolicyParams gradient;
};

// Clipped surrogate with a k3 KL penalty to `reference`, length-normalized
// per completion and averaged over the group. The gradient is exact.
//
// epsilon and beta are read from cfg without the (0, 1) range check, so a
// very large epsilon turns clipping off.
LossAndGradient grpo_loss(const ToyPolicy& policy, const ToyPolicy& reference, const GroupSample& group,
                          const GrpoConfig& cfg);

struct ToyExample {
  Context context = Context::Positive;
  bool is_positive = true;
};

// Per-update training log row. `episode` is the cumulative completion count.
struct LogRow {
  long episode = 0;
  double mean_reward = 0.0;
  double pos_emit_rate = 0.0;
  double neg_emit_rate = 0.0;
  double format_rate = 0.0;
  double loss = 0.0;
};

// Fixed-seed Monte Carlo estimate of the current policy's behaviour.
struct PolicyStats {
  long episode = 0;
  double pos_emit_rate = 0.0;
  double neg_emit_rate = 0.0;
  double format_rate = 0.0;
};

struct TrainResult {
  ToyPolicy policy;
  std::vector<LogRow> log;
  // Evaluation before training and after every update.
  std::vector<PolicyStats> evals;
};

// Samples a group per example, scores it with the reward module, normalizes
// advantages and takes one gradient-descent step per batch. The starting
// policy doubles as the frozen KL reference.
TrainResult train_toy(std::span<const ToyExample> dataset, const ToyPolicy& initial, const GrpoConfig& cfg,
                      const reward::RewardConfig& reward_cfg);

PolicyStats evaluate_policy(const ToyPolicy& policy, int samples_per_context, int max_len,
                            const reward::RewardConfig& reward_cfg, std::uint64_t seed);

// First evaluation at which pos_emit_rate >= threshold; -1 when never.
long episodes_to_threshold(std::span<const PolicyStats> evals, double threshold);

struct Demonstration {
  Context context = Context::Positive;
  std::vector<std::string> tokens;
};

struct SftConfig {
  int passes = 1;
  double learning_rate = 0.1;
};

// Cross-entropy fit on the demonstrations, one SGD step per demonstration.
// An end-of-sequence token is appended when missing. Throws UnknownToken.
ToyPolicy init_from_sft(const ToyPolicy& policy, std::span<const Demonstration> demonstrations, const SftConfig& cfg);

// The toy world: a label-agnostic corpus for the "pretrained" starting
// policy, label-conditioned CoT demonstrations, and a balanced dataset.
namespace toy {
std::vector<Demonstration> pretraining_corpus();
std::vector<Demonstration> cot_demonstrations();
std::vector<ToyExample> balanced_dataset(int pairs = 4);
ToyPolicy pretrained_policy();
// pretrained_policy() after CoT SFT on cot_demonstrations().
ToyPolicy cot_sft_policy();
SftConfig pretraining_config();
SftConfig cot_sft_config();
}  // namespace toy

void write_log_csv(std::ostream& out, std::span<const LogRow> log);

}  // namespace sam_align::grpo
