// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sam_align/config.hpp"

using namespace sam_align;

TEST(Config, DefaultsMirrorPublishedHyperparameters) {
  const auto cfg = build_config({});
  EXPECT_EQ(cfg.sft.learning_rate, 1e-5);
  EXPECT_EQ(cfg.sft.batch_size, 16);
  EXPECT_EQ(cfg.grpo.batch_size, 8);
  EXPECT_EQ(cfg.grpo.group_size, 4);
  EXPECT_EQ(cfg.grpo.episodes, 6000);
  EXPECT_EQ(cfg.caption.long_max_tokens, 32768);
  EXPECT_EQ(cfg.imagery.width, 1024);
  EXPECT_EQ(cfg.imagery.height, 1024);
  EXPECT_EQ(grpo::GrpoConfig{}.learning_rate, 1e-6);
  EXPECT_FALSE(cfg.eval.reasoning_model);
  EXPECT_EQ(cfg.workspace(), ".");
}

TEST(Config, ParsesSectionsCommentsAndQuotes) {
  const auto v = parse_config_text(
      "# top comment\n[imagery]\nurl_template = \"https://x/{lon},{lat}\"\nmax_rps = 1.5  # inline\n\n"
      "[Eval]\nkeywords = [\"military\", \"radar\"]\n");
  EXPECT_EQ(v.at("imagery.url_template"), "https://x/{lon},{lat}");
  EXPECT_EQ(v.at("imagery.max_rps"), "1.5");
  const auto cfg = build_config({v});
  EXPECT_EQ(cfg.imagery.max_rps, 1.5);
  EXPECT_EQ(cfg.eval.keywords.keywords(), (std::vector<std::string>{"military", "radar"}));
  EXPECT_EQ(cfg.reward.keywords.keywords(), cfg.eval.keywords.keywords());
}

TEST(Config, SyntaxErrors) {
  EXPECT_THROW(parse_config_text("key = 1\n"), UsageError);
  EXPECT_THROW(parse_config_text("[grpo\n"), UsageError);
  EXPECT_THROW(parse_config_text("[grpo]\njust words\n"), UsageError);
  EXPECT_THROW(parse_config_text("[grpo]\nx = \"open\n"), UsageError);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(build_config({{{"grpo.nonexistent", "1"}}}), UsageError);
  EXPECT_THROW(build_config({{{"grpo.group_size", "four"}}}), UsageError);
  EXPECT_THROW(build_config({{{"grpo.group_size", "1"}}}), UsageError);
  EXPECT_THROW(build_config({{{"grpo.clip_epsilon", "1.5"}}}), UsageError);
  EXPECT_THROW(build_config({{{"eval.reasoning_model", "maybe"}}}), UsageError);
  EXPECT_THROW(build_config({{{"review.port", "70000"}}}), UsageError);
}

TEST(Config, PrecedenceFlagsOverEnvOverFileOverDefaults) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "c.toml", "[grpo]\nseed = 1\nbatch_size = 2\nkl_beta = 0.1\n");
  std::string e1 = "SAM_ALIGN__GRPO__SEED=2", e2 = "SAM_ALIGN__GRPO__BATCH_SIZE=3", e3 = "CAPTION_API_KEY=tok",
              e4 = "UNRELATED=1";
  char* envp[] = {e1.data(), e2.data(), e3.data(), e4.data(), nullptr};
  const auto cfg = load_config(dir / "c.toml", envp, {{"grpo.seed", "3"}});
  EXPECT_EQ(cfg.grpo.seed, 3u);
  EXPECT_EQ(cfg.grpo.batch_size, 3);
  EXPECT_EQ(cfg.grpo.kl_beta, 0.1);
  EXPECT_EQ(cfg.grpo.clip_epsilon, 0.2);
  EXPECT_EQ(cfg.caption.api_key, "tok");
  EXPECT_THROW(load_config(dir / "missing.toml", nullptr, {}), UsageError);
}

TEST(Config, EnvironmentNames) {
  std::string bad = "SAM_ALIGN__NOSECTION=1";
  char* envp[] = {bad.data(), nullptr};
  EXPECT_THROW(config_from_env(envp), UsageError);
  std::string ok = "SAM_ALIGN__PATHS__MANIFEST=/data/m.jsonl";
  char* envp2[] = {ok.data(), nullptr};
  const auto cfg = build_config({config_from_env(envp2)});
  EXPECT_EQ(cfg.paths.manifest, "/data/m.jsonl");
  EXPECT_EQ(cfg.workspace(), "/data");
}

TEST(Config, EveryKnownKeyIsSettable) {
  const auto keys = known_config_keys();
  EXPECT_GE(keys.size(), 30u);
  EXPECT_NE(std::find(keys.begin(), keys.end(), "imagery.max_concurrency"), keys.end());
  EXPECT_NE(std::find(keys.begin(), keys.end(), "caption.retry_budget"), keys.end());
}
