#include <cerrno>
#include <csignal>
#include <cstring>
#include <deque>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "realface/error.hpp"
#include "realface/protocol.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen internals.
#include <httplib.h>

namespace realface::protocol {

namespace {

class ProcessConnection final : public Connection {
 public:
  explicit ProcessConnection(const std::string& command) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw OracleUnavailable(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw OracleUnavailable(std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw OracleUnavailable(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
  }

  ~ProcessConnection() override {
    if (in_ >= 0) ::close(in_);
    if (out_ >= 0) ::close(out_);
    if (pid_ > 0) {
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        ::usleep(10000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  void send(std::string_view frame) override {
    std::string line(frame);
    line.push_back('\n');
    std::size_t written = 0;
    while (written < line.size()) {
      const ssize_t n = ::write(in_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable(std::string("oracle process not accepting input: ") + std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> receive(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{out_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable(std::string("poll: ") + std::strerror(errno));
      }
      if (ready == 0) return std::nullopt;
      char chunk[4096];
      const ssize_t n = ::read(out_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable(std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) throw OracleUnavailable("oracle process closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
};

class HttpConnection final : public Connection {
 public:
  HttpConnection(const std::string& url, std::chrono::milliseconds timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
      throw SpecError("oracle url must start with http://: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = path_begin == std::string::npos ? url : url.substr(0, path_begin);
    path_ = path_begin == std::string::npos ? "/match" : url.substr(path_begin);
    client_ = std::make_unique<httplib::Client>(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client_->set_connection_timeout(secs.count(), usecs.count());
    client_->set_read_timeout(secs.count(), usecs.count());
    client_->set_write_timeout(secs.count(), usecs.count());
  }

  void send(std::string_view frame) override {
    auto res = client_->Post(path_, std::string(frame), "application/json");
    if (!res) return;  // transport failure behaves like a timeout
    if (res->status != 200) {
      throw OracleUnavailable("oracle returned HTTP " + std::to_string(res->status));
    }
    std::string body = res->body;
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    pending_.push_back(std::move(body));
  }

  std::optional<std::string> receive(std::chrono::milliseconds) override {
    if (pending_.empty()) return std::nullopt;
    std::string line = std::move(pending_.front());
    pending_.pop_front();
    return line;
  }

 private:
  std::unique_ptr<httplib::Client> client_;
  std::string path_;
  std::deque<std::string> pending_;
};

class LoopbackConnection final : public Connection {
 public:
  explicit LoopbackConnection(std::function<std::string(std::string_view)> handler) : handler_(std::move(handler)) {}

  void send(std::string_view frame) override { pending_.push_back(handler_(frame)); }

  std::optional<std::string> receive(std::chrono::milliseconds) override {
    if (pending_.empty()) return std::nullopt;
    std::string line = std::move(pending_.front());
    pending_.pop_front();
    return line;
  }

 private:
  std::function<std::string(std::string_view)> handler_;
  std::deque<std::string> pending_;
};

}  // namespace

std::unique_ptr<Connection> spawn_process(const std::string& command) {
  return std::make_unique<ProcessConnection>(command);
}

std::unique_ptr<Connection> connect_http(const std::string& url, std::chrono::milliseconds timeout) {
  return std::make_unique<HttpConnection>(url, timeout);
}

std::unique_ptr<Connection> loopback(std::function<std::string(std::string_view)> handler) {
  return std::make_unique<LoopbackConnection>(std::move(handler));
}

}  // namespace realface::protocol
