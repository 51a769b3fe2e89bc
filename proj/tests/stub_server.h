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

// Loopback HTTP stub that records request bodies and answers with a
// caller-supplied handler.

#ifndef BINVERDICT_TESTS_STUB_SERVER_H_
#define BINVERDICT_TESTS_STUB_SERVER_H_

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"

namespace binverdict::testing {

struct StubReply {
  int status = 200;
  std::string body;
};

class StubServer {
 public:
  using Handler = std::function<StubReply(const std::string& body, size_t n)>;

  StubServer(const std::string& path, Handler handler)
      : handler_(std::move(handler)) {
    server_.Post(path, [this](const httplib::Request& req,
                              httplib::Response& res) {
      size_t n;
      {
        std::lock_guard<std::mutex> lock(mu_);
        bodies_.push_back(req.body);
        n = bodies_.size();
      }
      StubReply reply = handler_(req.body, n);
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string Url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

  std::vector<std::string> bodies() const {
    std::lock_guard<std::mutex> lock(mu_);
    return bodies_;
  }

 private:
  httplib::Server server_;
  Handler handler_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<std::string> bodies_;
};

// Privileged loopback port with nothing listening: connections are refused
// immediately.
inline std::string DeadUrl(const std::string& path) {
  return "http://127.0.0.1:1" + path;
}

}  // namespace binverdict::testing

#endif  // BINVERDICT_TESTS_STUB_SERVER_H_
