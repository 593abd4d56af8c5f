#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace pheno::http {

/// POSTs `body` as JSON to `endpoint` ("http[s]://host[:port]/path") and
/// parses the JSON reply. Transport errors, non-2xx statuses, and
/// unparseable bodies throw BackendError. When `token_env` names a set
/// environment variable, its value is sent as a bearer token.
nlohmann::json post_json(const std::string& endpoint, const nlohmann::json& body,
                         std::chrono::milliseconds timeout, const char* token_env = nullptr);

}  // namespace pheno::http
