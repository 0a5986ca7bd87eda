/*
 * Copyright 2026 The lenbias Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "lenbias/error.hpp"

extern char** environ;

namespace lenbias {

// A child process run through `/bin/sh -c` with its stdin and stdout
// connected to pipes; stderr is inherited. Not copyable; the destructor
// kills and reaps a child that is still running.
class Subprocess {
 public:
  enum class ReadStatus { kLine, kEof, kTimeout };

  explicit Subprocess(const std::string& command) {
    // Writes to an adapter that already exited must surface as EPIPE rather
    // than terminate the whole process.
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
      throw ScorerError("pipe: " + std::string(std::strerror(errno)));
    }
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw ScorerError("pipe: " + std::string(std::strerror(errno)));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::string shell_command = command;
    char* argv[] = {const_cast<char*>("/bin/sh"), const_cast<char*>("-c"),
                    shell_command.data(), nullptr};
    // A fresh process group lets kill() reach anything the shell started.
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    const int rc =
        ::posix_spawn(&pid_, "/bin/sh", &actions, &attr, argv, environ);
    posix_spawnattr_destroy(&attr);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      throw ScorerError("cannot spawn '" + command + "': " + std::strerror(rc));
    }
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() {
    close_stdin();
    if (stdout_fd_ >= 0) ::close(stdout_fd_);
    if (!exit_status_) {
      kill();
      wait();
    }
  }

  // Returns false when the child closed its end of the pipe.
  bool write_all(std::string_view data) {
    while (!data.empty()) {
      const ssize_t n = ::write(stdin_fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  void close_stdin() {
    if (stdin_fd_ >= 0) {
      ::close(stdin_fd_);
      stdin_fd_ = -1;
    }
  }

  // Reads one '\n'-terminated line (terminator stripped). A final line
  // without terminator is returned as a line before kEof.
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        line.assign(buffer_, 0, nl);
        buffer_.erase(0, nl + 1);
        return ReadStatus::kLine;
      }
      if (eof_) {
        if (buffer_.empty()) return ReadStatus::kEof;
        line = std::move(buffer_);
        buffer_.clear();
        return ReadStatus::kLine;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) return ReadStatus::kTimeout;
      pollfd pfd{stdout_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ScorerError("poll: " + std::string(std::strerror(errno)));
      }
      if (ready == 0) return ReadStatus::kTimeout;
      char chunk[65536];
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw ScorerError("read: " + std::string(std::strerror(errno)));
      }
      if (n == 0) {
        eof_ = true;
      } else {
        buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    }
  }

  void kill() {
    if (!exit_status_ && pid_ > 0) ::kill(-pid_, SIGKILL);
  }

  // Blocks until the child exits; returns the raw wait status.
  int wait() {
    if (exit_status_) return *exit_status_;
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    exit_status_ = status;
    return status;
  }

  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
  bool eof_ = false;
  std::optional<int> exit_status_;
};

}  // namespace lenbias
