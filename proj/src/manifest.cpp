// SPDX-License-Identifier: Apache-2.0

#include "sam_align/manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sam_align::curation {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Military: return "military";
    case VerdictLabel::Civilian: return "civilian";
    case VerdictLabel::Skip: return "skip";
  }
  return "skip";
}

VerdictLabel parse_verdict_label(std::string_view s) {
  if (s == "military") return VerdictLabel::Military;
  if (s == "civilian") return VerdictLabel::Civilian;
  if (s == "skip") return VerdictLabel::Skip;
  throw Error("ParseError", "unknown verdict label '" + std::string(s) + "'");
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::C0: return "C0";
    case Category::C1: return "C1";
    case Category::C2: return "C2";
  }
  return "C2";
}

Category parse_category(std::string_view s) {
  if (s == "C0") return Category::C0;
  if (s == "C1") return Category::C1;
  if (s == "C2") return Category::C2;
  throw Error("ParseError", "unknown category '" + std::string(s) + "'");
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw Error("ParseError", "unknown split '" + std::string(s) + "'");
}

const CaptionRecord* ManifestEntry::latest_caption(PromptKind kind) const {
  for (auto it = captions.rbegin(); it != captions.rend(); ++it) {
    if (it->kind == kind) return &*it;
  }
  return nullptr;
}

json to_json(const ExpertVerdict& v) {
  return {{"image_id", v.image_id}, {"label", to_string(v.label)}, {"reviewer", v.reviewer}, {"ts", v.decided_at}};
}

ExpertVerdict verdict_from_json(const json& j) {
  return {j.at("image_id").get<std::string>(), parse_verdict_label(j.at("label").get<std::string>()),
          j.value("reviewer", ""), j.value("ts", "")};
}

json to_json(const ManifestEntry& e) {
  json site = {{"id", e.site.id},
               {"lon", e.site.point.lon},
               {"lat", e.site.point.lat},
               {"source", to_string(e.site.source)},
               {"name", e.site.name ? json(*e.site.name) : json(nullptr)}};
  json image = nullptr;
  if (e.image) image = {{"path", e.image->path}, {"w", e.image->width}, {"h", e.image->height}, {"zoom", e.image->zoom}};
  json expert = nullptr;
  if (e.expert) expert = {{"label", to_string(e.expert->label)}, {"reviewer", e.expert->reviewer}, {"ts", e.expert->decided_at}};
  json captions = json::array();
  for (const auto& c : e.captions) {
    captions.push_back({{"kind", to_string(c.kind)},
                        {"text", c.text},
                        {"model_id", c.model_id},
                        {"max_tokens", c.max_tokens},
                        {"ts", c.created_at}});
  }
  return {{"id", e.id},
          {"site", std::move(site)},
          {"image", std::move(image)},
          {"expert", std::move(expert)},
          {"category", e.category ? json(to_string(*e.category)) : json(nullptr)},
          {"split", e.split ? json(to_string(*e.split)) : json(nullptr)},
          {"captions", std::move(captions)}};
}

ManifestEntry entry_from_json(const json& j) {
  try {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    const auto& site = j.at("site");
    e.site.id = site.at("id").get<std::string>();
    e.site.point = GeoPoint::checked(site.at("lon").get<double>(), site.at("lat").get<double>());
    e.site.source = parse_site_source(site.at("source").get<std::string>());
    if (site.contains("name") && !site["name"].is_null()) e.site.name = site["name"].get<std::string>();
    if (j.contains("image") && !j["image"].is_null()) {
      const auto& im = j["image"];
      e.image = ImageAsset{e.id, e.site.id, im.at("path").get<std::string>(), im.at("w").get<int>(), im.at("h").get<int>(),
                           im.at("zoom").get<int>()};
    }
    if (j.contains("expert") && !j["expert"].is_null()) {
      const auto& ex = j["expert"];
      e.expert = ExpertVerdict{e.id, parse_verdict_label(ex.at("label").get<std::string>()), ex.value("reviewer", ""),
                               ex.value("ts", "")};
    }
    if (j.contains("category") && !j["category"].is_null()) e.category = parse_category(j["category"].get<std::string>());
    if (j.contains("split") && !j["split"].is_null()) e.split = parse_split(j["split"].get<std::string>());
    if (e.split && !e.category) throw ManifestError("entry " + e.id + " has a split but no category");
    if (j.contains("captions")) {
      for (const auto& c : j["captions"]) {
        e.captions.push_back({e.id, parse_prompt_kind(c.at("kind").get<std::string>()), c.at("text").get<std::string>(),
                              c.value("model_id", ""), c.value("max_tokens", 0), c.value("ts", "")});
      }
    }
    return e;
  } catch (const json::exception& ex) {
    throw ManifestError(std::string("bad manifest entry: ") + ex.what());
  }
}

std::string serialize_manifest(std::span<const ManifestEntry> entries) {
  std::string out;
  for (const auto& e : entries) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw ManifestError("line " + std::to_string(lineno) + ": " + ex.what());
    }
    entries.push_back(entry_from_json(j));
  }
  std::map<std::string, int> seen;
  for (const auto& e : entries) {
    if (++seen[e.id] > 1) throw ManifestError("duplicate entry id " + e.id);
  }
  return entries;
}

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_and_sync(const fs::path& path, std::string_view data, int flags) {
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw ManifestError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw ManifestError("write failed on " + path.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) { return parse_manifest(slurp(path)); }

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  write_and_sync(tmp, serialize_manifest(entries), O_WRONLY | O_CREAT | O_TRUNC);
  fs::rename(tmp, path);
}

fs::path verdict_log_path(const fs::path& manifest_path) {
  auto p = manifest_path;
  p.replace_extension(".verdicts.jsonl");
  return p;
}

void append_verdict(const fs::path& log_path, const ExpertVerdict& verdict) {
  write_and_sync(log_path, to_json(verdict).dump() + "\n", O_WRONLY | O_CREAT | O_APPEND);
}

std::vector<ExpertVerdict> read_verdicts(const fs::path& log_path) {
  std::vector<ExpertVerdict> out;
  if (!fs::exists(log_path)) return out;
  std::istringstream in(slurp(log_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(verdict_from_json(json::parse(line)));
    } catch (const json::exception&) {
      // A torn final line from a crash mid-append carries no acknowledged verdict.
      if (in.peek() == EOF) break;
      throw ManifestError("corrupt verdict log " + log_path.string());
    }
  }
  return out;
}

std::optional<ExpertVerdict> effective_verdict(std::span<const ExpertVerdict> history) {
  std::optional<ExpertVerdict> skip;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->label != VerdictLabel::Skip) return *it;
    if (!skip) skip = *it;
  }
  return skip;
}

void apply_verdicts(std::vector<ManifestEntry>& entries, std::span<const ExpertVerdict> history) {
  std::map<std::string, std::vector<ExpertVerdict>> by_image;
  for (const auto& v : history) by_image[v.image_id].push_back(v);
  for (auto& e : entries) {
    const auto it = by_image.find(e.id);
    if (it == by_image.end()) continue;
    // The manifest's own verdict predates everything in the log.
    std::vector<ExpertVerdict> merged;
    if (e.expert) merged.push_back(*e.expert);
    merged.insert(merged.end(), it->second.begin(), it->second.end());
    e.expert = effective_verdict(merged);
  }
}

ManifestLock::ManifestLock(const fs::path& manifest_path) {
  auto lock_path = manifest_path;
  lock_path += ".lock";
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw ManifestError("cannot open lock file " + lock_path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ManifestLocked(manifest_path.string());
  }
}

ManifestLock::~ManifestLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

ManifestStore::ManifestStore(fs::path manifest_path)
    : path_(std::move(manifest_path)), log_path_(verdict_log_path(path_)) {
  entries_ = read_manifest(path_);
  apply_verdicts(entries_, read_verdicts(log_path_));
}

std::vector<ManifestEntry> ManifestStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::optional<ManifestEntry> ManifestStore::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& e : entries_) {
    if (e.id == id) return e;
  }
  return std::nullopt;
}

ManifestEntry& ManifestStore::locate(const std::string& id) {
  for (auto& e : entries_) {
    if (e.id == id) return e;
  }
  throw UnknownImage(id);
}

void ManifestStore::persist() { write_manifest(path_, entries_); }

ManifestEntry ManifestStore::record_verdict(const std::string& image_id, VerdictLabel label, const std::string& reviewer) {
  std::lock_guard lock(mutex_);
  auto& entry = locate(image_id);
  const ExpertVerdict verdict{image_id, label, reviewer, utc_timestamp_now()};
  append_verdict(log_path_, verdict);
  std::vector<ExpertVerdict> merged;
  if (entry.expert) merged.push_back(*entry.expert);
  merged.push_back(verdict);
  entry.expert = effective_verdict(merged);
  persist();
  return entry;
}

}  // namespace sam_align::curation
