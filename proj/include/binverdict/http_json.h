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

// Minimal JSON-over-HTTP POST client shared by the remote embedding and
// generation backends.

#ifndef BINVERDICT_HTTP_JSON_H_
#define BINVERDICT_HTTP_JSON_H_

#include <chrono>
#include <string>
#include <string_view>

#include "json.hpp"

namespace binverdict {

struct HttpEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

// Splits "http://host:port/api/x" into base and path. Throws Error(kConfig)
// on anything that is not an absolute http(s) URL.
HttpEndpoint ParseEndpoint(std::string_view url);

// POSTs `body` and returns the parsed JSON response. Makes 1 + `retries`
// attempts; throws TransportError carrying the attempt count when all fail.
nlohmann::json PostJson(const std::string& url, const nlohmann::json& body,
                        std::chrono::milliseconds timeout, int retries);

// Looks up a dotted path such as "embedding" or "data.0.embedding". Numeric
// segments index arrays. Returns nullptr when the path does not resolve.
const nlohmann::json* FindJsonPath(const nlohmann::json& root,
                                   std::string_view path);

}  // namespace binverdict

#endif  // BINVERDICT_HTTP_JSON_H_
