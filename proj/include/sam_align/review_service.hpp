// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sam_align/errors.hpp"
#include "sam_align/manifest.hpp"
#include "sam_align/text_analysis.hpp"

namespace httplib {
class Server;
}

namespace sam_align {

class PortInUse : public Error {
 public:
  PortInUse(const std::string& host, int port);
};

// Images still waiting for a decisive verdict: never-reviewed ones first
// (KMZ candidates before world-cities samples, then by site id and image id),
// then previously skipped ones in the same order. Entries without imagery are
// left out.
std::vector<curation::ManifestEntry> review_queue(std::span<const curation::ManifestEntry> entries);

// {reviewed, remaining, skipped, per_category{C0,C1,C2}}
nlohmann::json review_stats(std::span<const curation::ManifestEntry> entries);

// JSON review API over the manifest. Holds the manifest lock for its whole
// lifetime, so a second service (or a CLI writer) on the same manifest fails
// with ManifestLocked.
class ReviewService {
 public:
  ReviewService(const std::filesystem::path& manifest, text::KeywordSet keywords);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port. Throws PortInUse.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

  curation::ManifestStore& store() noexcept { return store_; }

 private:
  void routes();

  curation::ManifestLock lock_;
  curation::ManifestStore store_;
  std::filesystem::path workspace_;
  text::KeywordSet keywords_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace sam_align
