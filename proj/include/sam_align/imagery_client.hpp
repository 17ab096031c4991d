// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sam_align/errors.hpp"
#include "sam_align/http.hpp"
#include "sam_align/records.hpp"

namespace sam_align {

class RateLimited : public Error {
 public:
  explicit RateLimited(const std::string& url) : Error("RateLimited", "still HTTP 429 after retry budget: " + url) {}
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& message) : Error("DecodeError", message) {}
};

class CacheWriteError : public Error {
 public:
  explicit CacheWriteError(const std::string& message) : Error("CacheWriteError", message) {}
};

struct ImageryConfig {
  // Placeholders: {lon} {lat} {zoom} {w} {h}.
  std::string url_template;
  // Optional "Name: value" header sent with every request.
  std::string auth_header;
  double max_rps = 2.0;
  int max_concurrency = 4;
  int width = 1024;
  int height = 1024;
  int zoom = 17;
  int max_retries = 4;
  std::chrono::milliseconds backoff_base{500};
  double backoff_factor = 2.0;

  void validate() const;
};

std::string expand_url_template(const std::string& tmpl, const GeoPoint& point, int zoom, int width, int height);

// "<site_id>/<zoom>_<w>x<h>"; also the cache sub-path without extension.
std::string cache_key(const std::string& site_id, int zoom, int width, int height);

struct ImageInfo {
  std::string extension;  // "png" or "jpg"
  std::string content_type;
  int width = 0;
  int height = 0;
};

// Reads the dimensions from a PNG IHDR or JPEG SOF header. Throws DecodeError.
ImageInfo probe_image(std::span<const std::byte> bytes);
ImageInfo probe_image(std::string_view bytes);

// At most `capacity` acquisitions in any window. Rates below 1/s become one
// acquisition per 1/rate seconds.
class RateLimiter {
 public:
  RateLimiter(double max_rps, Clock& clock);

  void acquire();

 private:
  Clock& clock_;
  std::size_t capacity_;
  Clock::duration window_;
  std::mutex mutex_;
  std::deque<Clock::time_point> starts_;
};

struct FetchResult {
  ImageAsset asset;
  int retries = 0;
  bool cache_hit = false;
};

// Fetches and caches imagery under <workspace>/cache. Asset paths are
// relative to the workspace (the manifest directory). Thread-safe; requests
// for a key already in flight wait for that request instead of issuing
// another one.
class ImageryClient {
 public:
  ImageryClient(ImageryConfig cfg, std::filesystem::path workspace, Transport transport, Clock& clock);

  FetchResult fetch(const SiteRecord& site);
  FetchResult fetch(const SiteRecord& site, int zoom);

  struct BatchItem {
    std::optional<FetchResult> result;
    std::exception_ptr error;
  };
  // Runs up to max_concurrency fetches at once; results follow input order.
  std::vector<BatchItem> fetch_all(std::span<const SiteRecord> sites, int zoom);

  std::size_t requests_made() const;

 private:
  FetchResult fetch_uncached(const SiteRecord& site, int zoom, const std::string& key);
  std::optional<FetchResult> lookup(const SiteRecord& site, int zoom, const std::string& key) const;
  void store(const std::string& key, const std::string& rel_path);

  ImageryConfig cfg_;
  std::filesystem::path workspace_;
  Transport transport_;
  Clock& clock_;
  RateLimiter limiter_;

  mutable std::mutex mutex_;
  nlohmann::json index_;
  std::map<std::string, std::shared_future<FetchResult>> in_flight_;
  std::size_t requests_ = 0;

  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int busy_ = 0;
};

}  // namespace sam_align
