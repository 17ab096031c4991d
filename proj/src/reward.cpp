// SPDX-License-Identifier: Apache-2.0

#include "sam_align/reward.hpp"

#include <cmath>

#include "sam_align/errors.hpp"

namespace sam_align::reward {

void RewardConfig::validate() const {
  if (!std::isfinite(keyword_weight) || keyword_weight <= 0.0) {
    throw UsageError("reward.keyword_weight must be finite and > 0");
  }
  if (!std::isfinite(format_weight) || format_weight < 0.0) {
    throw UsageError("reward.format_weight must be finite and >= 0");
  }
}

double keyword_reward(std::string_view raw_output, bool is_positive, const RewardConfig& cfg) {
  const bool flagged = text::flag_output(raw_output, cfg.keywords, cfg.reasoning_model);
  return flagged == is_positive ? cfg.keyword_weight : 0.0;
}

double format_reward(std::string_view raw_output, const RewardConfig& cfg) {
  return text::parse_output(raw_output).format_ok ? cfg.format_weight : 0.0;
}

RewardBreakdown total_reward(std::string_view raw_output, bool is_positive, const RewardConfig& cfg) {
  RewardBreakdown out;
  out.keyword_component = keyword_reward(raw_output, is_positive, cfg);
  out.format_component = format_reward(raw_output, cfg);
  out.total = out.keyword_component + out.format_component;
  return out;
}

}  // namespace sam_align::reward
