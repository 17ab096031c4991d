// SPDX-License-Identifier: Apache-2.0

#include "sam_align/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace sam_align {
namespace fs = std::filesystem;

fs::path AppConfig::workspace() const {
  const auto parent = paths.manifest.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string unquote(const std::string& v, std::size_t lineno) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
        out += v[i] == 'n' ? '\n' : v[i] == 't' ? '\t' : v[i];
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (!v.empty() && v.front() == '"') throw UsageError(fmt::format("config line {}: unterminated string", lineno));
  // Unquoted values may carry a trailing comment.
  const auto hash = v.find(" #");
  return hash == std::string::npos ? v : trim(v.substr(0, hash));
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError(fmt::format("{}: '{}' is not a valid number", key, raw));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const auto v = lower(trim(raw));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError(fmt::format("{}: '{}' is not a boolean", key, raw));
}

// ["a", "b"] or a,b
std::vector<std::string> parse_list(const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(AppConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Obj>
Setter number(Obj AppConfig::*section, T Obj::*field) {
  return [=](AppConfig& c, const std::string& k, const std::string& v) { (c.*section).*field = parse_number<T>(k, v); };
}

template <typename Obj>
Setter string(Obj AppConfig::*section, std::string Obj::*field) {
  return [=](AppConfig& c, const std::string&, const std::string& v) { (c.*section).*field = v; };
}

template <typename Obj>
Setter boolean(Obj AppConfig::*section, bool Obj::*field) {
  return [=](AppConfig& c, const std::string& k, const std::string& v) { (c.*section).*field = parse_bool(k, v); };
}

template <typename Obj>
Setter path(Obj AppConfig::*section, fs::path Obj::*field) {
  return [=](AppConfig& c, const std::string&, const std::string& v) { (c.*section).*field = v; };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"imagery.url_template", string(&AppConfig::imagery, &ImageryConfig::url_template)},
      {"imagery.auth_header", string(&AppConfig::imagery, &ImageryConfig::auth_header)},
      {"imagery.max_rps", number(&AppConfig::imagery, &ImageryConfig::max_rps)},
      {"imagery.max_concurrency", number(&AppConfig::imagery, &ImageryConfig::max_concurrency)},
      {"imagery.width", number(&AppConfig::imagery, &ImageryConfig::width)},
      {"imagery.height", number(&AppConfig::imagery, &ImageryConfig::height)},
      {"imagery.zoom", number(&AppConfig::imagery, &ImageryConfig::zoom)},
      {"imagery.max_retries", number(&AppConfig::imagery, &ImageryConfig::max_retries)},
      {"imagery.backoff_base_ms",
       [](AppConfig& c, const std::string& k, const std::string& v) {
         c.imagery.backoff_base = std::chrono::milliseconds(parse_number<long>(k, v));
       }},
      {"imagery.backoff_factor", number(&AppConfig::imagery, &ImageryConfig::backoff_factor)},
      {"caption.base_url", string(&AppConfig::caption, &CaptionConfig::base_url)},
      {"caption.model_id", string(&AppConfig::caption, &CaptionConfig::model_id)},
      {"caption.max_concurrency", number(&AppConfig::caption, &CaptionConfig::max_concurrency)},
      {"caption.retry_budget", number(&AppConfig::caption, &CaptionConfig::retry_budget)},
      {"caption.default_max_tokens", number(&AppConfig::caption, &CaptionConfig::default_max_tokens)},
      {"caption.long_max_tokens", number(&AppConfig::caption, &CaptionConfig::long_max_tokens)},
      {"caption.eval_temperature", number(&AppConfig::caption, &CaptionConfig::eval_temperature)},
      {"caption.sample_temperature", number(&AppConfig::caption, &CaptionConfig::sample_temperature)},
      {"reward.keyword_weight", number(&AppConfig::reward, &reward::RewardConfig::keyword_weight)},
      {"reward.format_weight", number(&AppConfig::reward, &reward::RewardConfig::format_weight)},
      {"grpo.group_size", number(&AppConfig::grpo, &grpo::GrpoConfig::group_size)},
      {"grpo.clip_epsilon", number(&AppConfig::grpo, &grpo::GrpoConfig::clip_epsilon)},
      {"grpo.kl_beta", number(&AppConfig::grpo, &grpo::GrpoConfig::kl_beta)},
      {"grpo.learning_rate", number(&AppConfig::grpo, &grpo::GrpoConfig::learning_rate)},
      {"grpo.batch_size", number(&AppConfig::grpo, &grpo::GrpoConfig::batch_size)},
      {"grpo.episodes", number(&AppConfig::grpo, &grpo::GrpoConfig::episodes)},
      {"grpo.seed", number(&AppConfig::grpo, &grpo::GrpoConfig::seed)},
      {"grpo.max_completion_tokens", number(&AppConfig::grpo, &grpo::GrpoConfig::max_completion_tokens)},
      {"grpo.eval_samples", number(&AppConfig::grpo, &grpo::GrpoConfig::eval_samples)},
      {"eval.keywords",
       [](AppConfig& c, const std::string&, const std::string& v) {
         c.eval.keywords = text::KeywordSet(parse_list(v));
         c.reward.keywords = c.eval.keywords;
       }},
      {"eval.reasoning_model", boolean(&AppConfig::eval, &EvalConfig::reasoning_model)},
      {"reward.reasoning_model", boolean(&AppConfig::reward, &reward::RewardConfig::reasoning_model)},
      {"sft.learning_rate", number(&AppConfig::sft, &SftExportConfig::learning_rate)},
      {"sft.batch_size", number(&AppConfig::sft, &SftExportConfig::batch_size)},
      {"paths.manifest", path(&AppConfig::paths, &PathsConfig::manifest)},
      {"paths.outputs", path(&AppConfig::paths, &PathsConfig::outputs)},
      {"review.host", string(&AppConfig::review, &ReviewConfig::host)},
      {"review.port", number(&AppConfig::review, &ReviewConfig::port)},
  };
  return table;
}

}  // namespace

ConfigValues parse_config_text(const std::string& text) {
  ConfigValues out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(fmt::format("config line {}: bad section header", lineno));
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw UsageError(fmt::format("config line {}: empty section name", lineno));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("config line {}: expected key = value", lineno));
    const auto key = lower(trim(line.substr(0, eq)));
    if (key.empty()) throw UsageError(fmt::format("config line {}: empty key", lineno));
    if (section.empty()) throw UsageError(fmt::format("config line {}: key '{}' outside a section", lineno, key));
    out[section + "." + key] = unquote(trim(line.substr(eq + 1)), lineno);
  }
  return out;
}

ConfigValues config_from_env(char** envp) {
  static constexpr std::string_view kPrefix = "SAM_ALIGN__";
  ConfigValues out;
  if (!envp) return out;
  for (char** e = envp; *e; ++e) {
    const std::string entry(*e);
    if (!entry.starts_with(kPrefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(kPrefix.size(), eq - kPrefix.size());
    const auto sep = name.find("__");
    if (sep == std::string::npos) throw UsageError("environment variable " + entry.substr(0, eq) + " lacks a KEY part");
    out[lower(name.substr(0, sep)) + "." + lower(name.substr(sep + 2))] = entry.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

AppConfig build_config(const std::vector<ConfigValues>& layers) {
  AppConfig cfg;
  cfg.grpo = grpo::GrpoConfig::toy_defaults();
  const auto& table = setters();
  for (const auto& layer : layers) {
    for (const auto& [key, value] : layer) {
      const auto it = table.find(key);
      if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
      try {
        it->second(cfg, key, value);
      } catch (const UsageError&) {
        throw;
      } catch (const Error& ex) {
        throw UsageError(key + ": " + ex.what());
      }
    }
  }
  cfg.reward.validate();
  cfg.grpo.validate();
  if (cfg.review.port < 0 || cfg.review.port > 65535) throw UsageError("review.port out of range");
  return cfg;
}

AppConfig load_config(const std::optional<fs::path>& file, char** envp, const ConfigValues& flags) {
  std::vector<ConfigValues> layers;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw UsageError("cannot read config file " + file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    layers.push_back(parse_config_text(ss.str()));
  }
  layers.push_back(config_from_env(envp));
  layers.push_back(flags);
  AppConfig cfg = build_config(layers);
  for (char** e = envp; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.starts_with("CAPTION_API_KEY=")) cfg.caption.api_key = std::string(entry.substr(16));
  }
  return cfg;
}

}  // namespace sam_align
