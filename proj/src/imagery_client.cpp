// SPDX-License-Identifier: Apache-2.0

#include "sam_align/imagery_client.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace sam_align {
namespace fs = std::filesystem;
using nlohmann::json;

void ImageryConfig::validate() const {
  if (url_template.empty()) throw UsageError("imagery.url_template is required");
  if (!(max_rps > 0.0) || !std::isfinite(max_rps)) throw UsageError("imagery.max_rps must be > 0");
  if (max_concurrency < 1) throw UsageError("imagery.max_concurrency must be >= 1");
  if (width < 1 || height < 1) throw UsageError("imagery width/height must be positive");
  if (max_retries < 0) throw UsageError("imagery.max_retries must be >= 0");
  if (!auth_header.empty()) parse_header_line(auth_header);
}

std::string expand_url_template(const std::string& tmpl, const GeoPoint& point, int zoom, int width, int height) {
  const std::pair<std::string, std::string> subs[] = {
      {"{lon}", fmt::format("{:.6f}", point.lon)}, {"{lat}", fmt::format("{:.6f}", point.lat)},
      {"{zoom}", std::to_string(zoom)},            {"{w}", std::to_string(width)},
      {"{h}", std::to_string(height)},
  };
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    bool replaced = false;
    for (const auto& [key, value] : subs) {
      if (tmpl.compare(i, key.size(), key) == 0) {
        out += value;
        i += key.size();
        replaced = true;
        break;
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

std::string cache_key(const std::string& site_id, int zoom, int width, int height) {
  return fmt::format("{}/{}_{}x{}", site_id, zoom, width, height);
}

namespace {

std::uint32_t be16(std::string_view b, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) << 8) |
         static_cast<unsigned char>(b[at + 1]);
}

std::uint32_t be32(std::string_view b, std::size_t at) { return (be16(b, at) << 16) | be16(b, at + 2); }

}  // namespace

ImageInfo probe_image(std::string_view b) {
  static constexpr std::string_view kPngSig("\x89PNG\r\n\x1a\n", 8);
  if (b.size() >= 24 && b.substr(0, 8) == kPngSig) {
    if (b.substr(12, 4) != "IHDR") throw DecodeError("PNG without IHDR chunk");
    const auto w = be32(b, 16), h = be32(b, 20);
    if (w == 0 || h == 0 || w > 0x7fffffff || h > 0x7fffffff) throw DecodeError("PNG with invalid dimensions");
    return {"png", "image/png", static_cast<int>(w), static_cast<int>(h)};
  }
  if (b.size() >= 4 && static_cast<unsigned char>(b[0]) == 0xFF && static_cast<unsigned char>(b[1]) == 0xD8) {
    std::size_t at = 2;
    while (at + 4 <= b.size()) {
      if (static_cast<unsigned char>(b[at]) != 0xFF) throw DecodeError("JPEG marker expected");
      const auto marker = static_cast<unsigned char>(b[at + 1]);
      if (marker == 0xFF) {
        ++at;
        continue;
      }
      if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7)) {
        at += 2;
        continue;
      }
      if (marker == 0xD9 || marker == 0xDA) break;
      const std::size_t len = be16(b, at + 2);
      const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
      if (sof) {
        if (at + 9 > b.size()) break;
        const auto h = be16(b, at + 5), w = be16(b, at + 7);
        if (w == 0 || h == 0) throw DecodeError("JPEG with zero dimensions");
        return {"jpg", "image/jpeg", static_cast<int>(w), static_cast<int>(h)};
      }
      if (len < 2) throw DecodeError("JPEG segment with bad length");
      at += 2 + len;
    }
    throw DecodeError("JPEG without a frame header");
  }
  throw DecodeError("response is neither PNG nor JPEG");
}

ImageInfo probe_image(std::span<const std::byte> bytes) {
  return probe_image(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RateLimiter::RateLimiter(double max_rps, Clock& clock) : clock_(clock) {
  if (max_rps >= 1.0) {
    capacity_ = static_cast<std::size_t>(std::floor(max_rps));
    window_ = std::chrono::seconds(1);
  } else {
    capacity_ = 1;
    window_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / max_rps));
  }
}

void RateLimiter::acquire() {
  // Holding the lock while sleeping queues callers in arrival order.
  std::lock_guard lock(mutex_);
  for (;;) {
    const auto now = clock_.now();
    while (!starts_.empty() && starts_.front() + window_ <= now) starts_.pop_front();
    if (starts_.size() < capacity_) {
      starts_.push_back(now);
      return;
    }
    clock_.sleep_for(starts_.front() + window_ - now);
  }
}

namespace {

void write_atomically(const fs::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheWriteError("cannot open " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw CacheWriteError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CacheWriteError("rename to " + path.string() + " failed: " + ec.message());
}

void check_site_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    throw CacheWriteError("site id '" + id + "' is not usable as a cache directory");
  }
}

}  // namespace

ImageryClient::ImageryClient(ImageryConfig cfg, fs::path workspace, Transport transport, Clock& clock)
    : cfg_(std::move(cfg)),
      workspace_(std::move(workspace)),
      transport_(std::move(transport)),
      clock_(clock),
      limiter_(cfg_.max_rps, clock) {
  cfg_.validate();
  index_ = json::object();
  const auto index_path = workspace_ / "cache" / "index.json";
  if (fs::exists(index_path)) {
    std::ifstream in(index_path);
    try {
      index_ = json::parse(in);
    } catch (const json::exception& ex) {
      throw Error("CacheIndexCorrupt", index_path.string() + ": " + ex.what());
    }
  }
}

std::size_t ImageryClient::requests_made() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::optional<FetchResult> ImageryClient::lookup(const SiteRecord& site, int zoom, const std::string& key) const {
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  const auto rel = it->at("path").get<std::string>();
  if (!fs::exists(workspace_ / rel)) return std::nullopt;
  return FetchResult{{site.id, site.id, rel, cfg_.width, cfg_.height, zoom}, 0, true};
}

void ImageryClient::store(const std::string& key, const std::string& rel_path) {
  index_[key] = {{"path", rel_path}, {"fetched_at", utc_timestamp_now()}};
  write_atomically(workspace_ / "cache" / "index.json", index_.dump(2));
}

FetchResult ImageryClient::fetch(const SiteRecord& site) { return fetch(site, cfg_.zoom); }

FetchResult ImageryClient::fetch(const SiteRecord& site, int zoom) {
  check_site_id(site.id);
  const auto key = cache_key(site.id, zoom, cfg_.width, cfg_.height);
  std::promise<FetchResult> promise;
  {
    std::unique_lock lock(mutex_);
    if (auto hit = lookup(site, zoom, key)) return *hit;
    const auto it = in_flight_.find(key);
    if (it != in_flight_.end()) {
      auto pending = it->second;
      lock.unlock();
      return pending.get();
    }
    in_flight_.emplace(key, promise.get_future().share());
  }
  try {
    auto result = fetch_uncached(site, zoom, key);
    promise.set_value(result);
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    return result;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    throw;
  }
}

FetchResult ImageryClient::fetch_uncached(const SiteRecord& site, int zoom, const std::string& key) {
  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return busy_ < cfg_.max_concurrency; });
    ++busy_;
  }
  struct SlotRelease {
    ImageryClient* self;
    ~SlotRelease() {
      {
        std::lock_guard lock(self->slots_mutex_);
        --self->busy_;
      }
      self->slots_cv_.notify_one();
    }
  } release{this};

  HttpRequest req;
  req.url = expand_url_template(cfg_.url_template, site.point, zoom, cfg_.width, cfg_.height);
  if (!cfg_.auth_header.empty()) req.headers.push_back(parse_header_line(cfg_.auth_header));

  int retries = 0;
  for (;;) {
    limiter_.acquire();
    {
      std::lock_guard lock(mutex_);
      ++requests_;
    }
    const HttpResponse resp = transport_(req);
    if (resp.status == 200) {
      const auto info = probe_image(resp.body);
      if (info.width != cfg_.width || info.height != cfg_.height) {
        throw DecodeError(fmt::format("expected {}x{} image, got {}x{}", cfg_.width, cfg_.height, info.width, info.height));
      }
      const std::string rel = fmt::format("cache/{}.{}", key, info.extension);
      std::error_code ec;
      fs::create_directories((workspace_ / rel).parent_path(), ec);
      if (ec) throw CacheWriteError("cannot create cache directory: " + ec.message());
      write_atomically(workspace_ / rel, resp.body);
      std::lock_guard lock(mutex_);
      store(key, rel);
      return FetchResult{{site.id, site.id, rel, cfg_.width, cfg_.height, zoom}, retries, false};
    }
    const bool retryable = resp.status == 429 || resp.status >= 500;
    if (retryable && retries < cfg_.max_retries) {
      const double scale = std::pow(cfg_.backoff_factor, retries);
      clock_.sleep_for(std::chrono::duration_cast<Clock::duration>(cfg_.backoff_base * scale));
      ++retries;
      continue;
    }
    if (resp.status == 429) throw RateLimited(req.url);
    throw HttpError(resp.status, "GET " + req.url);
  }
}

std::vector<ImageryClient::BatchItem> ImageryClient::fetch_all(std::span<const SiteRecord> sites, int zoom) {
  std::vector<BatchItem> items(sites.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sites.size(); i = next++) {
      try {
        items[i].result = fetch(sites[i], zoom);
      } catch (...) {
        items[i].error = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(sites.size(), static_cast<std::size_t>(cfg_.max_concurrency));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return items;
}

}  // namespace sam_align
