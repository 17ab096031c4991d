// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "sam_align/errors.hpp"

namespace sam_align {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

// Status 0 means the request never got a response (connection or TLS failure).
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& message);

  int status;
};

// Blocking request function. Tests swap in fakes; production uses
// make_http_transport.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

Transport make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(120));

// "Name: value" header line split on the first colon.
std::pair<std::string, std::string> parse_header_line(const std::string& line);

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  using duration = std::chrono::steady_clock::duration;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(duration d) = 0;
};

class SystemClock : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(duration d) override;
};

// Time only moves when someone sleeps; sleeps return immediately.
class VirtualClock : public Clock {
 public:
  time_point now() override;
  void sleep_for(duration d) override;

  duration total_slept() const;
  void advance(duration d);

 private:
  mutable std::mutex mutex_;
  time_point now_{};
  duration slept_{};
};

}  // namespace sam_align
