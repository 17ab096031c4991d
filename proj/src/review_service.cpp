// SPDX-License-Identifier: Apache-2.0

#include "sam_align/review_service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "sam_align/curation.hpp"
#include "sam_align/imagery_client.hpp"

namespace sam_align {
namespace fs = std::filesystem;
using curation::ManifestEntry;
using curation::VerdictLabel;
using nlohmann::json;

PortInUse::PortInUse(const std::string& host, int port)
    : Error("PortInUse", fmt::format("cannot bind {}:{}", host, port)) {}

namespace {

bool decided(const ManifestEntry& e) { return e.expert && e.expert->label != VerdictLabel::Skip; }

json error_body(const std::string& kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json site_json(const SiteRecord& s) {
  return {{"id", s.id},
          {"lon", s.point.lon},
          {"lat", s.point.lat},
          {"source", to_string(s.source)},
          {"name", s.name ? json(*s.name) : json(nullptr)}};
}

}  // namespace

std::vector<ManifestEntry> review_queue(std::span<const ManifestEntry> entries) {
  std::vector<ManifestEntry> queue;
  for (const auto& e : entries) {
    if (e.image && !decided(e)) queue.push_back(e);
  }
  std::stable_sort(queue.begin(), queue.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    const bool a_skipped = a.expert.has_value(), b_skipped = b.expert.has_value();
    if (a_skipped != b_skipped) return !a_skipped;
    if (a.site.source != b.site.source) return a.site.source == SiteSource::SamKmz;
    if (a.site.id != b.site.id) return a.site.id < b.site.id;
    return a.id < b.id;
  });
  return queue;
}

json review_stats(std::span<const ManifestEntry> entries) {
  long reviewed = 0, remaining = 0, skipped = 0;
  json per_category = {{"C0", 0}, {"C1", 0}, {"C2", 0}};
  for (const auto& e : entries) {
    if (decided(e)) {
      ++reviewed;
    } else if (e.image) {
      ++remaining;
      if (e.expert) ++skipped;
    }
    if (e.category) {
      auto& slot = per_category[std::string(to_string(*e.category))];
      slot = slot.get<long>() + 1;
    }
  }
  return {{"reviewed", reviewed}, {"remaining", remaining}, {"skipped", skipped}, {"per_category", per_category}};
}

ReviewService::ReviewService(const fs::path& manifest, text::KeywordSet keywords)
    : lock_(manifest),
      store_(manifest),
      workspace_(manifest.has_parent_path() ? manifest.parent_path() : fs::path(".")),
      keywords_(std::move(keywords)),
      server_(std::make_unique<httplib::Server>()) {
  // httplib's default adds SO_REUSEPORT, which would let a second service
  // share the port instead of failing with PortInUse.
  server_->set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

ReviewService::~ReviewService() { stop(); }

void ReviewService::routes() {
  auto& svr = *server_;

  svr.Get("/api/queue/next", [this](const httplib::Request&, httplib::Response& res) {
    const auto queue = review_queue(store_.snapshot());
    if (queue.empty()) {
      res.status = 204;
      return;
    }
    const auto& e = queue.front();
    json captions = json::array();
    for (const auto& c : e.captions) {
      captions.push_back({{"kind", to_string(c.kind)}, {"text", c.text}, {"model_id", c.model_id}});
    }
    send_json(res, 200,
              {{"image_id", e.id},
               {"image_url", "/api/images/" + e.id},
               {"site", site_json(e.site)},
               {"captions", captions},
               {"remaining", queue.size()},
               {"previously_skipped", e.expert.has_value()}});
  });

  svr.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto entry = store_.find(id);
    if (!entry || !entry->image) {
      send_json(res, 404, error_body("UnknownImage", "no image for id " + id));
      return;
    }
    std::ifstream in(workspace_ / entry->image->path, std::ios::binary);
    if (!in) {
      send_json(res, 404, error_body("MissingFile", "image file missing for " + id));
      return;
    }
    std::ostringstream bytes;
    bytes << in.rdbuf();
    std::string body = bytes.str();
    std::string type = "application/octet-stream";
    try {
      type = probe_image(body).content_type;
    } catch (const DecodeError&) {
    }
    res.status = 200;
    res.set_content(std::move(body), type);
  });

  svr.Post("/api/verdict", [this](const httplib::Request& req, httplib::Response& res) {
    std::string image_id, label, reviewer;
    try {
      const auto body = json::parse(req.body);
      image_id = body.at("image_id").get<std::string>();
      label = body.at("label").get<std::string>();
      reviewer = body.value("reviewer", "");
    } catch (const json::exception& ex) {
      send_json(res, 400, error_body("BadRequest", ex.what()));
      return;
    }
    VerdictLabel parsed;
    try {
      parsed = curation::parse_verdict_label(label);
    } catch (const Error& ex) {
      send_json(res, 400, error_body("BadRequest", ex.what()));
      return;
    }
    try {
      auto entry = store_.record_verdict(image_id, parsed, reviewer);
      std::optional<curation::Category> category;
      try {
        category = curation::assign_category(entry, keywords_);
      } catch (const Error&) {
        // No caption yet or no decisive verdict: category stays open.
        category = entry.category;
      }
      if (category != entry.category) {
        entry = store_.update(image_id, [&](ManifestEntry& e) {
          e.category = category;
          e.split.reset();
        });
      }
      send_json(res, 200,
                {{"ok", true},
                 {"category_if_assigned", entry.category ? json(to_string(*entry.category)) : json(nullptr)}});
    } catch (const curation::UnknownImage& ex) {
      send_json(res, 404, error_body(ex.kind(), ex.what()));
    } catch (const Error& ex) {
      send_json(res, 500, error_body(ex.kind(), ex.what()));
    }
  });

  svr.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, review_stats(store_.snapshot()));
  });
}

int ReviewService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw PortInUse(host, port);
  } else if (!server_->bind_to_port(host, port)) {
    throw PortInUse(host, port);
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ReviewService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void ReviewService::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace sam_align
