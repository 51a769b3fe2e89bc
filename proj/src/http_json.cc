// Copyright 2026 The binverdict Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "binverdict/http_json.h"

#include <cctype>
#include <charconv>

#include "binverdict/error.h"
#include "httplib.h"

namespace binverdict {

HttpEndpoint ParseEndpoint(std::string_view url) {
  constexpr std::string_view kScheme = "http://";
  if (url.substr(0, kScheme.size()) != kScheme || url.size() == kScheme.size()) {
    throw Error(ErrorKind::kConfig,
                "endpoint must be an http:// URL: " + std::string(url));
  }
  size_t slash = url.find('/', kScheme.size());
  HttpEndpoint endpoint;
  if (slash == std::string_view::npos) {
    endpoint.base = std::string(url);
    endpoint.path = "/";
  } else {
    endpoint.base = std::string(url.substr(0, slash));
    endpoint.path = std::string(url.substr(slash));
  }
  return endpoint;
}

nlohmann::json PostJson(const std::string& url, const nlohmann::json& body,
                        std::chrono::milliseconds timeout, int retries) {
  HttpEndpoint endpoint = ParseEndpoint(url);
  const std::string payload = body.dump();
  const int attempts = 1 + std::max(0, retries);
  std::string last_failure;

  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(endpoint.base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto response = client.Post(endpoint.path, payload, "application/json");
    if (!response) {
      last_failure = httplib::to_string(response.error());
      continue;
    }
    if (response->status < 200 || response->status >= 300) {
      last_failure = "HTTP status " + std::to_string(response->status);
      continue;
    }
    auto parsed = nlohmann::json::parse(response->body, nullptr, false);
    if (parsed.is_discarded()) {
      last_failure = "response is not valid JSON";
      continue;
    }
    return parsed;
  }
  throw TransportError("POST " + url + " failed after " +
                           std::to_string(attempts) +
                           " attempt(s): " + last_failure,
                       attempts);
}

const nlohmann::json* FindJsonPath(const nlohmann::json& root,
                                   std::string_view path) {
  const nlohmann::json* node = &root;
  while (!path.empty()) {
    size_t dot = path.find('.');
    std::string_view segment = path.substr(0, dot);
    path = dot == std::string_view::npos ? std::string_view{}
                                         : path.substr(dot + 1);
    if (node->is_array()) {
      size_t index = 0;
      auto [ptr, ec] =
          std::from_chars(segment.data(), segment.data() + segment.size(),
                          index);
      if (ec != std::errc{} || ptr != segment.data() + segment.size() ||
          index >= node->size()) {
        return nullptr;
      }
      node = &(*node)[index];
    } else if (node->is_object()) {
      auto it = node->find(std::string(segment));
      if (it == node->end()) return nullptr;
      node = &*it;
    } else {
      return nullptr;
    }
  }
  return node;
}

}  // namespace binverdict
