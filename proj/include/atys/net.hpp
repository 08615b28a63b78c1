// Copyright 2026 The Atys Authors.
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

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

namespace atys {

// Newline-delimited request/response server: each received line is passed
// to the handler and its return value is written back followed by '\n'.
// Connections are served on their own threads.
class LineServer {
 public:
  using Handler = std::function<std::string(std::string_view line)>;

  // Port 0 picks an ephemeral port. Throws ConnectionFailed.
  LineServer(const std::string& bind_address, std::uint16_t port, Handler handler);
  ~LineServer();

  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();

 private:
  struct Connection {
    int fd = -1;
    std::thread thread;
    bool done = false;
  };

  void accept_loop();
  void serve(Connection* conn);
  void reap_finished();

  Handler handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::mutex mu_;
  std::list<Connection> connections_;
  bool stopping_ = false;
};

// Sends one line and waits for one response line. Throws ConnectionFailed
// on connect errors, timeouts and early close.
std::string line_request(const std::string& host, std::uint16_t port, std::string_view line,
                         std::chrono::milliseconds timeout);

}  // namespace atys
