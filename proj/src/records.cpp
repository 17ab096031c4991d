// SPDX-License-Identifier: Apache-2.0

#include "sam_align/records.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>

#include "sam_align/errors.hpp"

namespace sam_align {

GeoPoint GeoPoint::checked(double lon, double lat) {
  GeoPoint p{lon, lat};
  if (!p.valid()) throw Error("InvalidCoordinate", fmt::format("lon={} lat={} outside WGS84 range", lon, lat));
  return p;
}

std::string_view to_string(SiteSource source) {
  return source == SiteSource::SamKmz ? "sam_kmz" : "world_cities";
}

SiteSource parse_site_source(std::string_view s) {
  if (s == "sam_kmz") return SiteSource::SamKmz;
  if (s == "world_cities") return SiteSource::WorldCities;
  throw Error("ParseError", "unknown site source '" + std::string(s) + "'");
}

namespace {
constexpr std::pair<PromptKind, std::string_view> kPromptNames[] = {
    {PromptKind::ConciseDetail, "concise_detail"}, {PromptKind::LongDetail, "long_detail"},
    {PromptKind::OpenEnded, "open_ended"},         {PromptKind::YesNo, "yes_no"},
    {PromptKind::MultipleChoice, "multiple_choice"}, {PromptKind::CotConvert, "cot_convert"},
};
}  // namespace

std::string_view to_string(PromptKind kind) {
  for (const auto& [k, name] : kPromptNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

PromptKind parse_prompt_kind(std::string_view s) {
  for (const auto& [k, name] : kPromptNames) {
    if (name == s) return k;
  }
  throw Error("ParseError", "unknown prompt kind '" + std::string(s) + "'");
}

std::string_view prompt_template(PromptKind kind) {
  switch (kind) {
    case PromptKind::ConciseDetail: return "Explain the image in detail, with 4-6 sentences.";
    case PromptKind::LongDetail: return "Explain this image in detail, as long as possible.";
    case PromptKind::OpenEnded: return "Explain the image.";
    case PromptKind::YesNo: return "Is this a military area?";
    case PromptKind::MultipleChoice:
      return "Choose the purpose of the area: A. Military B. Residential C. Industrial D. Agricultural E. Natural. "
             "Answer with a single letter.";
    case PromptKind::CotConvert:
      return "You will be given a long description of an overhead satellite image. Rewrite it as first-person visual "
             "reasoning followed by a conclusion. Put the reasoning, describing what you look at and what you infer "
             "from it, inside a single <reasoning></reasoning> block. Then write a 4-6 sentence description of the "
             "image inside a single <answer></answer> block. Keep every factual claim from the original and add none. "
             "Output nothing outside the two blocks.";
  }
  return "";
}

std::string utc_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                     tm.tm_min, tm.tm_sec);
}

}  // namespace sam_align
