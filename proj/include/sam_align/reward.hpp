// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

#include "sam_align/text_analysis.hpp"

namespace sam_align::reward {

struct RewardConfig {
  text::KeywordSet keywords = text::KeywordSet::defaults();
  double keyword_weight = 1.0;
  double format_weight = 0.5;
  bool reasoning_model = true;

  // Throws UsageError unless both weights are finite, keyword_weight > 0 and
  // format_weight >= 0.
  void validate() const;
};

struct RewardBreakdown {
  double keyword_component = 0.0;
  double format_component = 0.0;
  double total = 0.0;
};

// keyword_weight when the flag agrees with the label, else 0.
double keyword_reward(std::string_view raw_output, bool is_positive, const RewardConfig& cfg);

// format_weight for well-formed reasoning/answer output, whatever it says.
double format_reward(std::string_view raw_output, const RewardConfig& cfg);

RewardBreakdown total_reward(std::string_view raw_output, bool is_positive, const RewardConfig& cfg);

}  // namespace sam_align::reward
