// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace sam_align {

// WGS84 degrees.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  bool valid() const noexcept { return lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0; }

  // Throws Error("InvalidCoordinate") outside the valid ranges.
  static GeoPoint checked(double lon, double lat);

  bool operator==(const GeoPoint&) const = default;
};

enum class SiteSource { SamKmz, WorldCities };

struct SiteRecord {
  std::string id;
  GeoPoint point;
  SiteSource source = SiteSource::SamKmz;
  std::optional<std::string> name;

  bool operator==(const SiteRecord&) const = default;
};

struct ImageAsset {
  std::string id;
  std::string site_id;
  // Relative to the manifest directory.
  std::string path;
  int width = 1024;
  int height = 1024;
  int zoom = 0;

  bool operator==(const ImageAsset&) const = default;
};

enum class PromptKind { ConciseDetail, LongDetail, OpenEnded, YesNo, MultipleChoice, CotConvert };

struct CaptionRecord {
  std::string image_id;
  PromptKind kind = PromptKind::ConciseDetail;
  std::string text;
  std::string model_id;
  int max_tokens = 0;
  std::string created_at;

  bool operator==(const CaptionRecord&) const = default;
};

std::string_view to_string(SiteSource source);
SiteSource parse_site_source(std::string_view s);

// Snake-case wire names, e.g. "concise_detail".
std::string_view to_string(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view s);

// User prompt sent for each kind. For CotConvert this is the converter's
// system instruction.
std::string_view prompt_template(PromptKind kind);

// ISO-8601 UTC with second resolution, e.g. 2025-01-31T12:00:00Z.
std::string utc_timestamp_now();

}  // namespace sam_align
