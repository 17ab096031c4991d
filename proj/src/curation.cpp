// SPDX-License-Identifier: Apache-2.0

#include "sam_align/curation.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "sam_align/random.hpp"

namespace sam_align::curation {
using nlohmann::json;

InsufficientCategory::InsufficientCategory(Category c, std::size_t h, std::size_t n)
    : Error("InsufficientCategory", fmt::format("category {}: have {}, need {}", to_string(c), h, n)),
      category(c),
      have(h),
      need(n) {}

std::optional<Category> assign_category(const ManifestEntry& entry, const CaptionRecord* annotator_caption,
                                        const text::KeywordSet& keywords) {
  const bool decisive = entry.expert && entry.expert->label != VerdictLabel::Skip;
  if (!decisive) {
    if (entry.site.source == SiteSource::WorldCities) return Category::C2;
    throw MissingVerdict(entry.id);
  }
  if (entry.expert->label == VerdictLabel::Civilian) {
    if (entry.site.source == SiteSource::WorldCities) return Category::C2;
    return std::nullopt;
  }
  if (!annotator_caption) throw MissingCaption(entry.id, PromptKind::ConciseDetail);
  return text::contains_keyword(annotator_caption->text, keywords) ? Category::C0 : Category::C1;
}

std::optional<Category> assign_category(const ManifestEntry& entry, const text::KeywordSet& keywords) {
  return assign_category(entry, entry.latest_caption(PromptKind::ConciseDetail), keywords);
}

void assign_categories(std::vector<ManifestEntry>& entries, const text::KeywordSet& keywords) {
  for (auto& e : entries) {
    const auto category = assign_category(e, keywords);
    if (category != e.category) e.split.reset();
    e.category = category;
  }
}

std::optional<std::size_t> SplitQuota::get(Category c) const {
  switch (c) {
    case Category::C0: return c0;
    case Category::C1: return c1;
    case Category::C2: return c2;
  }
  return 0;
}

namespace {

constexpr std::array kCategories{Category::C0, Category::C1, Category::C2};

// Site ids of a category in selection order, each with its images by id.
using SiteOrder = std::vector<std::pair<std::string, std::vector<const ManifestEntry*>>>;

SiteOrder selection_order(std::span<const ManifestEntry> entries, Category category, std::uint64_t seed) {
  std::map<std::string, std::vector<const ManifestEntry*>> by_site;
  for (const auto& e : entries) {
    if (e.category == category) by_site[e.site.id].push_back(&e);
  }
  SiteOrder order(by_site.begin(), by_site.end());
  for (auto& [site, images] : order) {
    std::sort(images.begin(), images.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  }
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint32_t>(category) + 1));
  portable_shuffle(order, rng);
  return order;
}

std::size_t count_images(const SiteOrder& order, const std::set<std::string>& excluded_sites,
                         const std::set<std::string>& taken_ids) {
  std::size_t n = 0;
  for (const auto& [site, images] : order) {
    if (excluded_sites.count(site)) continue;
    for (const auto* e : images) n += taken_ids.count(e->id) ? 0 : 1;
  }
  return n;
}

void take(const SiteOrder& order, Category category, std::optional<std::size_t> quota, Split split,
          const std::set<std::string>& excluded_sites, std::set<std::string>& taken_ids,
          std::set<std::string>& used_sites, std::vector<ManifestEntry>& out) {
  const std::size_t have = count_images(order, excluded_sites, taken_ids);
  const std::size_t need = quota.value_or(have);
  if (have < need) throw InsufficientCategory(category, have, need);
  std::size_t got = 0;
  for (const auto& [site, images] : order) {
    if (got == need) break;
    if (excluded_sites.count(site)) continue;
    for (const auto* e : images) {
      if (got == need) break;
      if (taken_ids.count(e->id)) continue;
      ManifestEntry copy = *e;
      copy.split = split;
      out.push_back(std::move(copy));
      taken_ids.insert(e->id);
      used_sites.insert(site);
      ++got;
    }
  }
}

bool by_category_then_id(const ManifestEntry& a, const ManifestEntry& b) {
  if (a.category != b.category) return a.category < b.category;
  return a.id < b.id;
}

}  // namespace

Splits build_splits(std::span<const ManifestEntry> entries, const SplitQuotas& quotas, std::uint64_t seed) {
  std::array<SiteOrder, 3> orders;
  for (const auto c : kCategories) orders[static_cast<int>(c)] = selection_order(entries, c, seed);

  Splits splits;
  std::set<std::string> taken_ids;
  std::set<std::string> train_sites;
  const std::set<std::string> no_sites;
  for (const auto c : kCategories) {
    take(orders[static_cast<int>(c)], c, quotas.train.get(c), Split::Train, no_sites, taken_ids, train_sites,
         splits.train);
  }
  std::set<std::string> test_sites;
  for (const auto c : kCategories) {
    take(orders[static_cast<int>(c)], c, quotas.test.get(c), Split::Test, train_sites, taken_ids, test_sites,
         splits.test);
  }
  for (const auto& site : test_sites) {
    if (train_sites.count(site)) throw SiteLeakage(site);
  }
  std::sort(splits.train.begin(), splits.train.end(), by_category_then_id);
  std::sort(splits.test.begin(), splits.test.end(), by_category_then_id);
  return splits;
}

std::vector<ManifestEntry> apply_splits(std::span<const ManifestEntry> entries, const Splits& splits) {
  std::map<std::string, Split> membership;
  for (const auto& e : splits.train) membership[e.id] = Split::Train;
  for (const auto& e : splits.test) membership[e.id] = Split::Test;
  std::vector<ManifestEntry> out(entries.begin(), entries.end());
  for (auto& e : out) {
    const auto it = membership.find(e.id);
    if (it == membership.end()) {
      e.split.reset();
    } else {
      e.split = it->second;
    }
  }
  return out;
}

SftVariant parse_sft_variant(std::string_view s) {
  if (s == "concise") return SftVariant::Concise;
  if (s == "cot") return SftVariant::Cot;
  throw UsageError("unknown SFT variant '" + std::string(s) + "' (expected concise|cot)");
}

std::vector<SftRecord> export_sft(std::span<const ManifestEntry> entries, SftVariant variant) {
  const PromptKind caption_kind = variant == SftVariant::Concise ? PromptKind::ConciseDetail : PromptKind::CotConvert;
  const PromptKind prompt_kind = variant == SftVariant::Concise ? PromptKind::ConciseDetail : PromptKind::OpenEnded;
  std::vector<SftRecord> out;
  for (const auto& e : entries) {
    if (e.split != Split::Train) continue;
    const auto* caption = e.latest_caption(caption_kind);
    if (!caption) throw MissingCaption(e.id, caption_kind);
    out.push_back({e.image ? e.image->path : std::string(), std::string(prompt_template(prompt_kind)), caption->text});
  }
  return out;
}

std::string sft_to_jsonl(std::span<const SftRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += json{{"image", r.image}, {"prompt", r.prompt}, {"response", r.response}}.dump();
    out += '\n';
  }
  return out;
}

}  // namespace sam_align::curation
