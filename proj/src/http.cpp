// SPDX-License-Identifier: Apache-2.0

#include "sam_align/http.hpp"

#include <thread>

#include <fmt/format.h>
#include <httplib.h>

namespace sam_align {

HttpError::HttpError(int s, const std::string& message)
    : Error("HttpError", s ? fmt::format("HTTP {}: {}", s, message) : message), status(s) {}

namespace {

// Splits "scheme://host[:port]/path?query" into the client origin and the request target.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw HttpError(0, "URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Transport make_http_transport(std::chrono::seconds timeout) {
  return [timeout](const HttpRequest& req) {
    const auto [origin, target] = split_url(req.url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_follow_location(true);
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);

    httplib::Result res;
    if (req.method == "GET") {
      res = client.Get(target, headers);
    } else if (req.method == "POST") {
      res = client.Post(target, headers, req.body, req.content_type.empty() ? "application/json" : req.content_type);
    } else {
      throw HttpError(0, "unsupported method " + req.method);
    }
    if (!res) throw HttpError(0, fmt::format("{} {} failed: {}", req.method, req.url, httplib::to_string(res.error())));
    return HttpResponse{res->status, res->body, res->get_header_value("Content-Type")};
  };
}

std::pair<std::string, std::string> parse_header_line(const std::string& line) {
  const auto colon = line.find(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("header must look like 'Name: value', got '" + line + "'");
  auto value = line.substr(colon + 1);
  const auto first = value.find_first_not_of(' ');
  value = first == std::string::npos ? std::string() : value.substr(first);
  return {line.substr(0, colon), value};
}

void SystemClock::sleep_for(duration d) { std::this_thread::sleep_for(d); }

VirtualClock::time_point VirtualClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void VirtualClock::sleep_for(duration d) {
  std::lock_guard lock(mutex_);
  now_ += d;
  slept_ += d;
}

VirtualClock::duration VirtualClock::total_slept() const {
  std::lock_guard lock(mutex_);
  return slept_;
}

void VirtualClock::advance(duration d) {
  std::lock_guard lock(mutex_);
  now_ += d;
}

}  // namespace sam_align
