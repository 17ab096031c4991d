// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sam_align/grpo.hpp"

using namespace sam_align;
using namespace sam_align::grpo;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

GrpoConfig loss_cfg(double eps, double beta) {
  GrpoConfig cfg;
  cfg.clip_epsilon = eps;
  cfg.kl_beta = beta;
  return cfg;
}

reward::RewardConfig pinned_reward(double format_weight = 0.5) {
  reward::RewardConfig r;
  r.keyword_weight = 1.0;
  r.format_weight = format_weight;
  r.reasoning_model = true;
  return r;
}

}  // namespace

TEST(Advantages, HandExamples) {
  for (double a : compute_advantages(std::vector<double>{1, 1, 1, 1})) EXPECT_EQ(a, 0.0);
  const auto two = compute_advantages(std::vector<double>{1, 0});
  EXPECT_NEAR(two[0], 1.0, 1e-6);
  EXPECT_NEAR(two[1], -1.0, 1e-6);
  const auto four = compute_advantages(std::vector<double>{2, 0, 0, 2});
  const double expected[] = {1, -1, -1, 1};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(four[i], expected[i], 1e-6);
}

TEST(Advantages, NormalizationProperties) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> gsize(2, 16);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_real_distribution<double> scale(0.1, 50.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> r(gsize(rng));
    for (auto& x : r) x = normal(rng);
    const auto a = compute_advantages(r);
    EXPECT_LE(std::abs(mean(a)), 1e-9);
    EXPECT_NEAR(pop_std(a), 1.0, 1e-9);

    const double shift = normal(rng), c = scale(rng);
    std::vector<double> shifted = r, scaled = r;
    for (auto& x : shifted) x += shift;
    for (auto& x : scaled) x *= c;
    const auto as = compute_advantages(shifted), ac = compute_advantages(scaled);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_NEAR(as[i], a[i], 1e-9);
      EXPECT_NEAR(ac[i], a[i], 1e-9);
    }
  }
}

TEST(Policy, SoftmaxIsADistribution) {
  std::mt19937_64 rng(1);
  auto inst = oracles::random_instance(rng, 0.2);
  for (int prev = 0; prev < inst.policy.vocab_size(); ++prev) {
    const auto lp = inst.policy.log_probs(Context::Positive, prev);
    EXPECT_NEAR(lp.array().exp().sum(), 1.0, 1e-12);
  }
}

TEST(Policy, CheckpointRoundTrip) {
  const auto p = toy::cot_sft_policy();
  const auto back = ToyPolicy::from_json(p.to_json());
  EXPECT_EQ(back.vocab(), p.vocab());
  EXPECT_TRUE(back.params().weights == p.params().weights);
  EXPECT_TRUE(back.params().bias == p.params().bias);
}

TEST(Policy, UnknownTokenThrows) {
  ToyPolicy p(ToyPolicy::default_vocab());
  EXPECT_THROW(p.tokenize("<reasoning> tank"), UnknownToken);
  EXPECT_EQ(p.detokenize(p.tokenize("radar site <eos>")), "radar site");
}

TEST(SampleGroup, DegenerateDistributionGivesIdenticalSequences) {
  ToyPolicy p(oracles::small_vocab(4));
  p.params().bias(1) = 1000.0;
  std::mt19937_64 rng(3);
  const auto g = sample_group(p, Context::Negative, 6, 5, rng);
  for (const auto& seq : g.completions) EXPECT_EQ(seq, g.completions.front());
  EXPECT_EQ(g.completions.front().size(), 5u);
}

TEST(SampleGroup, FixedSeedIsDeterministic) {
  const auto p = toy::pretrained_policy();
  std::mt19937_64 a(17), b(17);
  const auto g1 = sample_group(p, Context::Positive, 8, 12, a);
  const auto g2 = sample_group(p, Context::Positive, 8, 12, b);
  EXPECT_EQ(g1.completions, g2.completions);
  EXPECT_EQ(g1.logprobs_old, g2.logprobs_old);
}

TEST(SampleGroup, UniformFrequenciesMatchMultinomial) {
  ToyPolicy p(oracles::small_vocab(4));
  std::mt19937_64 rng(2024);
  const auto g = sample_group(p, Context::Positive, 10000, 1, rng);
  std::vector<int> counts(4, 0);
  for (const auto& seq : g.completions) {
    ASSERT_EQ(seq.size(), 1u);
    ++counts[seq[0]];
  }
  for (int c : counts) EXPECT_NEAR(c / 10000.0, 0.25, 0.02);
  EXPECT_NEAR(g.logprobs_old[0][0], std::log(0.25), 1e-12);
}

TEST(GrpoLoss, IdentityCaseIsExactlyZero) {
  const auto p = toy::pretrained_policy();
  std::mt19937_64 rng(8);
  auto g = sample_group(p, Context::Positive, 4, 12, rng);
  g.rewards.assign(4, 1.0);
  g.advantages = compute_advantages(g.rewards);
  const auto lg = grpo_loss(p, p, g, loss_cfg(0.2, 0.04));
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.gradient.max_abs(), 0.0);
}

TEST(GrpoLoss, MatchesReferenceLossValue) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = oracles::random_instance(rng, 0.2);
    const auto lg = grpo_loss(inst.policy, inst.reference, inst.group, loss_cfg(0.2, 0.04));
    EXPECT_NEAR(lg.loss, oracles::reference_loss(inst.policy.params(), inst.reference.params(), inst.group, 0.2, 0.04),
                1e-12);
  }
}

TEST(GrpoLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double eps = trial % 2 ? 0.2 : 0.1;
    const double beta = trial % 3 == 0 ? 0.0 : 0.04 * (1 + trial % 4);
    const auto inst = oracles::random_instance(rng, eps);
    const auto lg = grpo_loss(inst.policy, inst.reference, inst.group, loss_cfg(eps, beta));
    worst = std::max(worst, oracles::max_fd_relative_error(inst, lg.gradient, eps, beta));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GrpoLoss, TwoTokenClippingHandCalculation) {
  // vocab {a, <eos>}, zero parameters: pi(a) = 0.5 at the first step. Old
  // log-prob log(1/3) gives rho = 1.5, above 1 + eps = 1.2.
  ToyPolicy p({"a", "<eos>"});
  GroupSample g;
  g.context = Context::Positive;
  g.completions = {{0}, {0}};
  g.logprobs_old = {{std::log(1.0 / 3.0)}, {std::log(1.0 / 3.0)}};
  g.advantages = {1.0, -1.0};
  g.rewards = {1.0, 0.0};
  const auto lg = grpo_loss(p, p, g, loss_cfg(0.2, 0.0));
  // A = +1 takes the clipped 1.2, A = -1 keeps the unclipped -1.5.
  EXPECT_NEAR(lg.loss, -(1.2 - 1.5) / 2.0, 1e-12);
  // Unclipped, the two terms would cancel to zero.
  GrpoConfig wide = loss_cfg(1e12, 0.0);
  EXPECT_NEAR(grpo_loss(p, p, g, wide).loss, 0.0, 1e-12);
  // Only the A = -1 term carries gradient: 0.5 * rho * (onehot - pi) = 0.75 * (0.5, -0.5).
  EXPECT_NEAR(lg.gradient.bias(0), 0.375, 1e-12);
  EXPECT_NEAR(lg.gradient.bias(1), -0.375, 1e-12);
  EXPECT_NEAR(lg.gradient.weights(0, 0), 0.375, 1e-12);
  EXPECT_NEAR(lg.gradient.weights(2 + 1, 0), 0.375, 1e-12);
  EXPECT_EQ(lg.gradient.weights(1, 0), 0.0);
}

TEST(GrpoLoss, UnboundedEpsilonEqualsVanillaPolicyGradient) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = oracles::random_instance(rng, 0.2);
    const auto lg = grpo_loss(inst.policy, inst.reference, inst.group, loss_cfg(1e12, 0.0));
    const auto pg = oracles::vanilla_pg_gradient(inst.policy.params(), inst.group);
    EXPECT_LT((lg.gradient.weights - pg.weights).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((lg.gradient.bias - pg.bias).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GrpoLoss, KlTermIsNonNegative) {
  // Zero advantages leave only beta * mean(k3), which must be >= 0.
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = oracles::random_instance(rng, 0.2);
    std::fill(inst.group.advantages.begin(), inst.group.advantages.end(), 0.0);
    EXPECT_GE(grpo_loss(inst.policy, inst.reference, inst.group, loss_cfg(0.2, 1.0)).loss, 0.0);
  }
}

TEST(GrpoLoss, RejectsMalformedGroups) {
  ToyPolicy p(oracles::small_vocab(3));
  GroupSample g;
  g.completions = {{0}};
  g.logprobs_old = {{0.0}};
  g.advantages = {0.0};
  EXPECT_THROW(grpo_loss(p, p, g, loss_cfg(0.2, 0.0)), UsageError);
}

TEST(TrainToy, ZeroEpisodesReturnsInitialPolicy) {
  auto cfg = GrpoConfig::toy_defaults();
  cfg.episodes = 0;
  const auto init = toy::pretrained_policy();
  const auto data = toy::balanced_dataset();
  const auto res = train_toy(data, init, cfg, pinned_reward());
  EXPECT_TRUE(res.policy.params().weights == init.params().weights);
  EXPECT_TRUE(res.policy.params().bias == init.params().bias);
  EXPECT_TRUE(res.log.empty());
}

TEST(TrainToy, SeededRunIsBitReproducible) {
  auto cfg = GrpoConfig::toy_defaults();
  cfg.episodes = 400;
  cfg.eval_samples = 50;
  const auto data = toy::balanced_dataset();
  const auto init = toy::cot_sft_policy();
  const auto a = train_toy(data, init, cfg, pinned_reward());
  const auto b = train_toy(data, init, cfg, pinned_reward());
  EXPECT_TRUE(a.policy.params().weights == b.policy.params().weights);
  std::ostringstream la, lb;
  write_log_csv(la, a.log);
  write_log_csv(lb, b.log);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.log.back().episode, 400);  // 12 full batches of 8 groups, then one of 4
}

TEST(TrainToy, FormatRewardRaisesCompliance) {
  auto cfg = GrpoConfig::toy_defaults();
  const auto data = toy::balanced_dataset();
  const auto init = toy::cot_sft_policy();
  const auto off = train_toy(data, init, cfg, pinned_reward(0.0));
  const auto on = train_toy(data, init, cfg, pinned_reward(0.5));
  EXPECT_GT(on.evals.back().format_rate, off.evals.back().format_rate);
}

TEST(TrainToy, LogHasDocumentedColumns) {
  std::ostringstream out;
  write_log_csv(out, std::vector<LogRow>{{4, 1.0, 0.5, 0.25, 0.75, -0.1}});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "episode,mean_reward,pos_emit_rate,neg_emit_rate,format_rate,loss");
}

TEST(Sft, ZeroPassesLeavesPolicyUnchanged) {
  const auto init = toy::pretrained_policy();
  const auto out = init_from_sft(init, toy::cot_demonstrations(), SftConfig{0, 1.0});
  EXPECT_TRUE(out.params().weights == init.params().weights);
}

TEST(Sft, RepeatedDemonstrationBecomesArgmaxRollout) {
  ToyPolicy p(ToyPolicy::default_vocab());
  const std::vector<Demonstration> demo{{Context::Positive, {"<reasoning>", "radar", "</reasoning>", "<answer>", "silo", "</answer>"}}};
  const auto fitted = init_from_sft(p, demo, SftConfig{200, 0.5});
  EXPECT_EQ(fitted.detokenize(fitted.greedy_rollout(Context::Positive, 12)),
            "<reasoning> radar </reasoning> <answer> silo </answer>");
}

TEST(Sft, UnknownTokenInDemonstration) {
  ToyPolicy p(ToyPolicy::default_vocab());
  const std::vector<Demonstration> demo{{Context::Positive, {"tank"}}};
  EXPECT_THROW(init_from_sft(p, demo, SftConfig{1, 0.1}), UnknownToken);
}

TEST(Crossing, FirstEvaluationAtThreshold) {
  const std::vector<PolicyStats> evals{{0, 0.5, 0, 0}, {32, 0.89, 0, 0}, {64, 0.9, 0, 0}, {96, 0.95, 0, 0}};
  EXPECT_EQ(episodes_to_threshold(evals, 0.9), 64);
  EXPECT_EQ(episodes_to_threshold(evals, 0.99), -1);
}
