// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sam_align/errors.hpp"
#include "sam_align/records.hpp"

namespace sam_align::curation {

enum class VerdictLabel { Military, Civilian, Skip };
enum class Category { C0, C1, C2 };
enum class Split { Train, Test };

std::string_view to_string(VerdictLabel label);
VerdictLabel parse_verdict_label(std::string_view s);
std::string_view to_string(Category category);
Category parse_category(std::string_view s);
std::string_view to_string(Split split);
Split parse_split(std::string_view s);

struct ExpertVerdict {
  std::string image_id;
  VerdictLabel label = VerdictLabel::Skip;
  std::string reviewer;
  std::string decided_at;

  bool operator==(const ExpertVerdict&) const = default;
};

// One curated image. `image` is empty until the imagery has been fetched.
struct ManifestEntry {
  std::string id;
  SiteRecord site;
  std::optional<ImageAsset> image;
  std::optional<ExpertVerdict> expert;
  std::optional<Category> category;
  std::optional<Split> split;
  std::vector<CaptionRecord> captions;

  // Most recently appended caption of the given kind, or nullptr.
  const CaptionRecord* latest_caption(PromptKind kind) const;

  bool operator==(const ManifestEntry&) const = default;
};

class ManifestError : public Error {
 public:
  explicit ManifestError(const std::string& message) : Error("ManifestError", message) {}
};

nlohmann::json to_json(const ManifestEntry& entry);
ManifestEntry entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExpertVerdict& verdict);
ExpertVerdict verdict_from_json(const nlohmann::json& j);

// JSONL text, one entry per line, deterministic key order.
std::string serialize_manifest(std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> parse_manifest(std::string_view text);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
// Writes to a temporary sibling and renames over the target.
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// Append-only verdict history kept next to the manifest.
std::filesystem::path verdict_log_path(const std::filesystem::path& manifest_path);
// Appends one line and fsyncs before returning.
void append_verdict(const std::filesystem::path& log_path, const ExpertVerdict& verdict);
std::vector<ExpertVerdict> read_verdicts(const std::filesystem::path& log_path);

// Latest non-Skip verdict wins; a history of only Skips yields the last Skip.
std::optional<ExpertVerdict> effective_verdict(std::span<const ExpertVerdict> history);

// Replays a verdict history onto entries; verdicts for unknown ids are ignored.
void apply_verdicts(std::vector<ManifestEntry>& entries, std::span<const ExpertVerdict> history);

class ManifestLocked : public Error {
 public:
  explicit ManifestLocked(const std::string& path) : Error("ManifestLocked", path + " is held by another process") {}
};

class UnknownImage : public Error {
 public:
  explicit UnknownImage(const std::string& id) : Error("UnknownImage", "no manifest entry with id " + id) {}
};

// Exclusive advisory lock on <manifest>.lock, released on destruction.
class ManifestLock {
 public:
  explicit ManifestLock(const std::filesystem::path& manifest_path);
  ~ManifestLock();
  ManifestLock(const ManifestLock&) = delete;
  ManifestLock& operator=(const ManifestLock&) = delete;

 private:
  int fd_ = -1;
};

// In-memory manifest with a single serialized writer. Verdicts are appended
// to the log (and fsynced) before the manifest is rewritten and before
// record_verdict returns.
class ManifestStore {
 public:
  explicit ManifestStore(std::filesystem::path manifest_path);

  const std::filesystem::path& path() const noexcept { return path_; }
  std::vector<ManifestEntry> snapshot() const;
  std::optional<ManifestEntry> find(const std::string& id) const;

  // Throws UnknownImage. Returns the updated entry.
  ManifestEntry record_verdict(const std::string& image_id, VerdictLabel label, const std::string& reviewer);

  // Applies `fn` to the entry under the writer lock and persists.
  template <typename Fn>
  ManifestEntry update(const std::string& image_id, Fn&& fn) {
    std::lock_guard lock(mutex_);
    auto& entry = locate(image_id);
    fn(entry);
    persist();
    return entry;
  }

 private:
  ManifestEntry& locate(const std::string& id);
  void persist();

  std::filesystem::path path_;
  std::filesystem::path log_path_;
  mutable std::mutex mutex_;
  std::vector<ManifestEntry> entries_;
};

}  // namespace sam_align::curation
