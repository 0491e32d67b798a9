// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON-over-HTTP transport. Kept apart from clients.hpp so that offline
// builds never pull in the socket layer.

#include <chrono>
#include <string>

#include "httplib.h"
#include "unlearn/clients.hpp"

namespace unlearn::clients {

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30),
                         RetryPolicy retry = {})
      : base_url_(std::move(base_url)), timeout_(timeout), retry_(retry) {
    require(base_url_.starts_with("http://") || base_url_.starts_with("https://"), ErrorKind::InvalidArgument,
            "endpoint '" + base_url_ + "' is not an http(s) URL");
  }

  /// Every wire endpoint is a pure function of its request, so all are retried.
  json post(std::string_view endpoint, const json& request) override {
    return with_retries([&] { return post_once(endpoint, request); }, retry_);
  }

 private:
  json post_once(std::string_view endpoint, const json& request) {
    httplib::Client cli(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    const auto res = cli.Post(std::string(endpoint), request.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
        fail(ErrorKind::Timeout, base_url_ + std::string(endpoint) + ": " + httplib::to_string(err));
      fail(ErrorKind::PortUnavailable, base_url_ + std::string(endpoint) + ": " + httplib::to_string(err));
    }
    if (res->status >= 500)
      fail(ErrorKind::PortUnavailable, base_url_ + std::string(endpoint) + ": HTTP " + std::to_string(res->status));
    if (res->status != 200)
      fail(ErrorKind::ProtocolError, base_url_ + std::string(endpoint) + ": HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception&) {
      fail(ErrorKind::ProtocolError, base_url_ + std::string(endpoint) + ": body is not JSON");
    }
  }

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  RetryPolicy retry_;
};

}  // namespace unlearn::clients
