// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sam_align/caption_client.hpp"
#include "sam_align/grpo.hpp"
#include "sam_align/imagery_client.hpp"
#include "sam_align/reward.hpp"

namespace sam_align {

struct EvalConfig {
  // Also used by the reward and by category assignment.
  text::KeywordSet keywords = text::KeywordSet::defaults();
  // Answer-span-only flagging; `evaluate --reasoning-model` turns it on.
  bool reasoning_model = false;
};

// Hyperparameters recorded next to exported SFT files for the external trainer.
struct SftExportConfig {
  double learning_rate = 1e-5;
  int batch_size = 16;
};

struct PathsConfig {
  std::filesystem::path manifest = "manifest.jsonl";
  std::filesystem::path outputs = "outputs";
};

struct ReviewConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct AppConfig {
  ImageryConfig imagery;
  CaptionConfig caption;
  reward::RewardConfig reward;
  grpo::GrpoConfig grpo;
  EvalConfig eval;
  SftExportConfig sft;
  PathsConfig paths;
  ReviewConfig review;

  // Directory holding the manifest; image and cache paths are relative to it.
  std::filesystem::path workspace() const;
};

// Flat "section.key" -> raw value.
using ConfigValues = std::map<std::string, std::string>;

// `[section]` headers, `key = value` lines, `#` comments. Values may be
// double-quoted. Throws UsageError with the line number on bad syntax.
ConfigValues parse_config_text(const std::string& text);

// SAM_ALIGN__SECTION__KEY variables, lowercased to section.key.
ConfigValues config_from_env(char** envp);

// Every accepted "section.key".
std::vector<std::string> known_config_keys();

// Applies values in order of increasing precedence; later layers win.
// Unknown keys and unparseable values throw UsageError.
AppConfig build_config(const std::vector<ConfigValues>& layers);

// defaults < file < environment < flag overrides. CAPTION_API_KEY fills
// caption.api_key.
AppConfig load_config(const std::optional<std::filesystem::path>& file, char** envp, const ConfigValues& flags);

}  // namespace sam_align
