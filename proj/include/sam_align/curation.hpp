// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sam_align/errors.hpp"
#include "sam_align/manifest.hpp"
#include "sam_align/text_analysis.hpp"

namespace sam_align::curation {

class MissingVerdict : public Error {
 public:
  explicit MissingVerdict(const std::string& image_id)
      : Error("MissingVerdict", "no expert verdict for candidate " + image_id) {}
};

class MissingCaption : public Error {
 public:
  MissingCaption(const std::string& image_id, PromptKind kind)
      : Error("MissingCaption", "image " + image_id + " has no " + std::string(to_string(kind)) + " caption") {}
};

class InsufficientCategory : public Error {
 public:
  InsufficientCategory(Category category, std::size_t have, std::size_t need);

  Category category;
  std::size_t have;
  std::size_t need;
};

class SiteLeakage : public Error {
 public:
  explicit SiteLeakage(const std::string& site_id)
      : Error("SiteLeakage", "site " + site_id + " appears in both splits") {}
};

// C0 / C1 for expert-confirmed military images depending on whether the
// annotator caption is flagged, C2 for civilian images. Returns nullopt for a
// KMZ candidate the expert rejected as civilian, which is dropped from the
// dataset. World-cities samples without a verdict count as civilian.
//
// Throws MissingVerdict for KMZ candidates without a decisive verdict and
// MissingCaption when a military image has no caption to judge.
std::optional<Category> assign_category(const ManifestEntry& entry, const CaptionRecord* annotator_caption,
                                        const text::KeywordSet& keywords);

// Uses the entry's latest concise-detail caption.
std::optional<Category> assign_category(const ManifestEntry& entry, const text::KeywordSet& keywords);

// Sets `category` on every entry (clearing it for dropped ones). Entries whose
// category changes lose their split.
void assign_categories(std::vector<ManifestEntry>& entries, const text::KeywordSet& keywords);

// Per-category image counts; nullopt takes everything still eligible.
struct SplitQuota {
  std::optional<std::size_t> c0 = 0;
  std::optional<std::size_t> c1 = 0;
  std::optional<std::size_t> c2 = 0;

  std::optional<std::size_t> get(Category c) const;
};

struct SplitQuotas {
  SplitQuota train{101, 0, 200};
  SplitQuota test{15, std::nullopt, 100};
};

struct Splits {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

// Site-disjoint, seed-deterministic selection. Within a category, sites are
// shuffled and taken whole-site-first in that order (images of a site in id
// order); train is filled before test, and test only draws from sites not
// used by train. Output entries carry their split and are sorted by
// (category, id). Throws InsufficientCategory when a quota cannot be met.
Splits build_splits(std::span<const ManifestEntry> entries, const SplitQuotas& quotas, std::uint64_t seed);

// Returns `entries` with split fields replaced by the membership in `splits`.
std::vector<ManifestEntry> apply_splits(std::span<const ManifestEntry> entries, const Splits& splits);

enum class SftVariant { Concise, Cot };

SftVariant parse_sft_variant(std::string_view s);

struct SftRecord {
  std::string image;
  std::string prompt;
  std::string response;
};

// One record per train entry: concise captions under the concise-detail
// prompt, or converted reasoning captions under the open-ended prompt.
// Throws MissingCaption.
std::vector<SftRecord> export_sft(std::span<const ManifestEntry> entries, SftVariant variant);

std::string sft_to_jsonl(std::span<const SftRecord> records);

}  // namespace sam_align::curation
