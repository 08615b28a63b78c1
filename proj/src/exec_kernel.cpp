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

#include "exec_kernel.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "atys/error.hpp"

extern char** environ;

namespace atys::detail {

namespace {

struct WindowOutput {
  std::string text;
  int status = 0;
};

class ExecKernel final : public Kernel {
 public:
  ExecKernel(KernelKind kind, std::string command_template, const KernelConfig& config, double hz)
      : Kernel(kind, hz, config.window_seconds, config.meta),
        template_(std::move(command_template)),
        pid_token_(config.process.pid),
        format_(config.exec_format) {}

  ~ExecKernel() override { stop(); }

  void stop() override {
    pid_t child = -1;
    {
      std::lock_guard lock(mu_);
      child = child_;
    }
    if (child > 0) {
      ::kill(-child, SIGTERM);
      ::kill(child, SIGTERM);
    }
    if (reader_.joinable()) reader_.join();
  }

 protected:
  void on_open(double hz) override {
    if (reader_.joinable()) reader_.join();
    const std::string command = expand_command_template(template_, pid_token_, hz, window_seconds());

    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(ErrorCode::kKernelExited, "pipe failed");
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, &attr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    ::close(fds[1]);
    if (rc != 0) {
      ::close(fds[0]);
      throw Error(ErrorCode::kKernelExited, std::string("cannot spawn kernel command: ") + std::strerror(rc));
    }
    {
      std::lock_guard lock(mu_);
      child_ = pid;
    }
    const int read_fd = fds[0];
    reader_ = std::thread([this, pid, read_fd] {
      WindowOutput out;
      char buf[65536];
      while (true) {
        const ssize_t n = ::read(read_fd, buf, sizeof buf);
        if (n > 0) {
          out.text.append(buf, static_cast<std::size_t>(n));
        } else if (n < 0 && errno == EINTR) {
          continue;
        } else {
          break;
        }
      }
      ::close(read_fd);
      int status = 0;
      while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      out.status = status;
      std::lock_guard lock(mu_);
      child_ = -1;
      ready_.push_back(std::move(out));
      cv_.notify_all();
    });
  }

  FoldedProfile collect(std::uint64_t, double) override {
    WindowOutput out;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !ready_.empty(); });
      out = std::move(ready_.front());
      ready_.pop_front();
    }
    if (!WIFEXITED(out.status) || WEXITSTATUS(out.status) != 0) {
      std::string why = WIFEXITED(out.status) ? "exit status " + std::to_string(WEXITSTATUS(out.status))
                                              : "signal " + std::to_string(WTERMSIG(out.status));
      throw Error(ErrorCode::kKernelExited, "kernel command terminated with " + why);
    }
    try {
      return parse_folded(out.text, format_, meta_);
    } catch (const MalformedLine& e) {
      throw Error(ErrorCode::kMalformedKernelOutput, e.what());
    }
  }

 private:
  std::string template_;
  std::string pid_token_;
  FoldedFormat format_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<WindowOutput> ready_;
  pid_t child_ = -1;
  std::thread reader_;
};

}  // namespace

std::unique_ptr<Kernel> make_exec_kernel(KernelKind kind, std::string command_template,
                                         const KernelConfig& config, double frequency_hz) {
  return std::make_unique<ExecKernel>(kind, std::move(command_template), config, frequency_hz);
}

}  // namespace atys::detail
