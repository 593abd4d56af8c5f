#include "pheno/http.hpp"

#include <cstdlib>

#include <httplib.h>

#include "pheno/error.hpp"

namespace pheno::http {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

nlohmann::json post_json(const std::string& endpoint, const nlohmann::json& body,
                         std::chrono::milliseconds timeout, const char* token_env) {
  const auto [origin, path] = split_endpoint(endpoint);
  httplib::Client client(origin);
  const auto seconds = static_cast<time_t>(timeout.count() / 1000);
  const auto micros = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  httplib::Headers headers;
  if (token_env != nullptr) {
    if (const char* token = std::getenv(token_env); token != nullptr && *token != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  auto result = client.Post(path, headers, body.dump(), "application/json");
  if (!result) {
    throw BackendError(endpoint + ": " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw BackendError(endpoint + ": HTTP " + std::to_string(result->status));
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw BackendError(endpoint + ": unparseable reply: " + e.what());
  }
}

}  // namespace pheno::http
