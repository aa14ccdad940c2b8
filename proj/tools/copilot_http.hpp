#pragma once

// Eigen must be parsed before httplib pulls in <resolv.h>, which defines _res.
#include "pace/copilot.hpp"

#include <httplib.h>

namespace pace {

/// Routes every request under `/` to the service.
inline void mount_copilot(httplib::Server& server, CopilotService& service) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [key, value] : req.params) request.query.emplace(key, value);
    for (const auto& [key, value] : req.headers) request.headers.emplace(key, value);
    request.body = req.body;
    const ApiResponse response = service.handle(request);
    res.status = response.status;
    res.set_content(response.body.dump(), "application/json; charset=utf-8");
  };
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
  server.Put(R"(/.*)", forward);
  server.Delete(R"(/.*)", forward);
}

/// Splits "host:port"; a bare port binds 127.0.0.1.
inline std::pair<std::string, int> parse_bind_address(const std::string& text) {
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : text.substr(0, colon);
  const std::string port = colon == std::string::npos ? text : text.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || value < 0 || value > 65535) {
    throw std::invalid_argument("bad bind address '" + text + "'");
  }
  return {host, value};
}

}  // namespace pace
