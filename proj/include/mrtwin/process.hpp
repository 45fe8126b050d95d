// Copyright 2026 The mrtwin Authors
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

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "mrtwin/errors.hpp"

namespace mrtwin {

/// Splits a command line into argv. Whitespace separates words; single and
/// double quotes group, backslash escapes the next character outside single
/// quotes.
inline std::vector<std::string> split_command(std::string_view line) {
  std::vector<std::string> words;
  std::string current;
  bool in_word = false;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quote == '\'') {
      if (ch == '\'') quote = 0; else current.push_back(ch);
      continue;
    }
    if (ch == '\\' && i + 1 < line.size()) {
      current.push_back(line[++i]);
      in_word = true;
      continue;
    }
    if (quote == '"') {
      if (ch == '"') quote = 0; else current.push_back(ch);
      continue;
    }
    if (ch == '\'' || ch == '"') {
      quote = ch;
      in_word = true;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\n') {
      if (in_word) words.push_back(std::move(current));
      current.clear();
      in_word = false;
      continue;
    }
    current.push_back(ch);
    in_word = true;
  }
  if (quote != 0) {
    throw LaunchFailure("unterminated quote in command line: " + std::string(line));
  }
  if (in_word) words.push_back(std::move(current));
  return words;
}

namespace detail {

inline void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigemptyset(&sa.sa_mask);
    ::sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)done;
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw LaunchFailure(std::string("pipe: ") + std::strerror(errno));
  }
  return {Fd(fds[0]), Fd(fds[1])};
}

}  // namespace detail

/// A child process whose stdin/stdout are pipes carrying newline-delimited
/// text. Stderr is inherited. The destructor kills and reaps a still-running
/// child.
class ChildProcess {
 public:
  ChildProcess() = default;
  ~ChildProcess() { kill_and_reap(); }
  ChildProcess(ChildProcess&& o) noexcept { *this = std::move(o); }
  ChildProcess& operator=(ChildProcess&& o) noexcept {
    if (this != &o) {
      kill_and_reap();
      pid_ = std::exchange(o.pid_, -1);
      to_child_ = std::move(o.to_child_);
      from_child_ = std::move(o.from_child_);
      buffer_ = std::move(o.buffer_);
      exit_status_ = o.exit_status_;
      eof_ = o.eof_;
    }
    return *this;
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  static ChildProcess launch(const std::vector<std::string>& argv,
                             const std::filesystem::path& workdir = {}) {
    if (argv.empty()) {
      throw LaunchFailure("empty command line");
    }
    detail::ignore_sigpipe_once();
    auto [stdin_read, stdin_write] = detail::make_pipe();
    auto [stdout_read, stdout_write] = detail::make_pipe();
    auto [err_read, err_write] = detail::make_pipe();

    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const std::string dir = workdir.string();

    const pid_t pid = ::fork();
    if (pid < 0) {
      throw LaunchFailure(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      int err = 0;
      if (!dir.empty() && ::chdir(dir.c_str()) != 0) {
        err = errno;
      } else if (::dup2(stdin_read.get(), STDIN_FILENO) < 0 ||
                 ::dup2(stdout_write.get(), STDOUT_FILENO) < 0) {
        err = errno;
      } else {
        ::execvp(args[0], args.data());
        err = errno;
      }
      [[maybe_unused]] auto n = ::write(err_write.get(), &err, sizeof(err));
      ::_exit(127);
    }

    ChildProcess child;
    child.pid_ = pid;
    child.to_child_ = std::move(stdin_write);
    child.from_child_ = std::move(stdout_read);
    stdin_read.reset();
    stdout_write.reset();
    err_write.reset();

    int child_errno = 0;
    ssize_t got = 0;
    do {
      got = ::read(err_read.get(), &child_errno, sizeof(child_errno));
    } while (got < 0 && errno == EINTR);
    if (got > 0) {
      child.kill_and_reap();
      throw LaunchFailure("cannot launch '" + argv[0] + "': " + std::strerror(child_errno));
    }
    return child;
  }

  bool started() const noexcept { return pid_ > 0; }

  /// Writes `line` plus a newline. Throws PeerExited if the pipe is closed.
  void write_line(std::string_view line) {
    std::string framed(line);
    framed.push_back('\n');
    std::size_t off = 0;
    while (off < framed.size()) {
      const ssize_t n = ::write(to_child_.get(), framed.data() + off, framed.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw PeerExited(std::string("write to child failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line without its terminator, or nullopt when `timeout` elapses
  /// first. Throws PeerExited at end of stream and MalformedResponse when a
  /// line exceeds `max_line` bytes.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout,
                                       std::size_t max_line = 1 << 20) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buffer_.size() > max_line) {
        throw MalformedResponse("response line exceeds " + std::to_string(max_line) + " bytes");
      }
      if (eof_) {
        throw PeerExited("child closed its output stream");
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      pollfd pfd{from_child_.get(), POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(1, left.count())));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw PeerExited(std::string("poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(from_child_.get(), chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw PeerExited(std::string("read from child failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        eof_ = true;
        continue;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Closes the child's stdin (signals end of input).
  void close_input() noexcept { to_child_.reset(); }

  /// Waits up to `timeout` for the child to exit; returns its exit code
  /// (128 + signal for signalled children) or nullopt if still running.
  std::optional<int> wait_exit(std::chrono::milliseconds timeout) {
    if (exit_status_) return exit_status_;
    if (pid_ <= 0) return std::nullopt;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        pid_ = -1;
        return exit_status_;
      }
      if (r < 0 && errno != EINTR) {
        pid_ = -1;
        return exit_status_;
      }
      if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  /// SIGTERM, a short grace period, then SIGKILL; always reaps.
  void kill_and_reap() noexcept {
    to_child_.reset();
    from_child_.reset();
    if (pid_ <= 0) return;
    ::kill(pid_, SIGTERM);
    try {
      if (wait_exit(std::chrono::milliseconds(200))) return;
    } catch (...) {
    }
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
      }
      exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      pid_ = -1;
    }
  }

  std::optional<int> exit_status() const noexcept { return exit_status_; }

 private:
  pid_t pid_ = -1;
  detail::Fd to_child_;
  detail::Fd from_child_;
  std::string buffer_;
  std::optional<int> exit_status_;
  bool eof_ = false;
};

}  // namespace mrtwin
