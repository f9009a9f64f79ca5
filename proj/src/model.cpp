#include "segfalsify/model.hpp"

#include "segfalsify/protocol.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

namespace segfalsify {

double smoothstep(double low, double high, double x) {
  const double u = std::clamp((x - low) / (high - low), 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

ProbMap ReferenceModel::predict(const Image& img) {
  const Plane<double> luma = luminance(img).cast<double>();
  const Eigen::Index h = luma.rows();
  const Eigen::Index w = luma.cols();
  ProbMap out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const Eigen::Index yy = std::clamp<Eigen::Index>(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) sum += luma(yy, std::clamp<Eigen::Index>(x + dx, 0, w - 1));
      }
      out(y, x) = static_cast<float>(smoothstep(kLow, kHigh, sum / 9.0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SubprocessModel

namespace {

constexpr std::size_t kStderrKeep = 4096;

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

SubprocessModel::SubprocessModel(std::string command, std::chrono::milliseconds timeout,
                                 std::uint16_t protocol_version)
    : command_(std::move(command)), timeout_(timeout) {
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe(in_pipe) != 0) throw ModelError("pipe() failed: " + std::string(std::strerror(errno)));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ModelError("pipe() failed: " + std::string(std::strerror(errno)));
  }
  if (::pipe(err_pipe) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw ModelError("pipe() failed: " + std::string(std::strerror(errno)));
  }

  pid_ = ::fork();
  if (pid_ < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) {
      ::close(fd);
    }
    throw ModelError("fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) {
      ::close(fd);
    }
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  child_err_ = err_pipe[0];
  ::fcntl(child_err_, F_SETFL, ::fcntl(child_err_, F_GETFL) | O_NONBLOCK);

  write_all(protocol::encode_handshake(protocol_version));
  const auto reply = read_exact(protocol::kHandshakeSize);
  std::uint16_t peer = 0;
  try {
    peer = protocol::decode_handshake(reply);
  } catch (const protocol::ProtocolError& e) {
    fail(std::string("handshake: ") + e.what());
  }
  if (peer != protocol_version) {
    fail("handshake: peer speaks protocol version " + std::to_string(peer) + ", expected " +
         std::to_string(protocol_version));
  }
}

SubprocessModel::~SubprocessModel() { shutdown(); }

void SubprocessModel::shutdown() {
  close_fd(to_child_);
  close_fd(from_child_);
  close_fd(child_err_);
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string SubprocessModel::drain_stderr() {
  std::string text;
  if (child_err_ < 0) return text;
  char buf[1024];
  for (;;) {
    const ssize_t n = ::read(child_err_, buf, sizeof(buf));
    if (n <= 0) break;
    text.append(buf, static_cast<std::size_t>(n));
    if (text.size() > kStderrKeep) text.erase(0, text.size() - kStderrKeep);
  }
  return text;
}

void SubprocessModel::fail(const std::string& what) {
  broken_ = true;
  std::string message = "model process '" + command_ + "': " + what;
  // Give a dying child a moment so its exit status and last words are visible.
  if (pid_ > 0) {
    int status = 0;
    pid_t done = 0;
    for (int i = 0; i < 20 && done == 0; ++i) {
      done = ::waitpid(pid_, &status, WNOHANG);
      if (done == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (done == pid_) {
      pid_ = -1;
      if (WIFEXITED(status)) message += "; exited with status " + std::to_string(WEXITSTATUS(status));
      if (WIFSIGNALED(status)) message += "; killed by signal " + std::to_string(WTERMSIG(status));
    }
  }
  const std::string err = drain_stderr();
  if (!err.empty()) message += "; stderr: " + err;
  shutdown();
  throw ModelError(message);
}

void SubprocessModel::write_all(const std::vector<std::uint8_t>& bytes) {
  std::size_t done = 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (done < bytes.size()) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail("timed out writing request");
    pollfd pfd{to_child_, POLLOUT, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) fail(ready == 0 ? "timed out writing request" : "poll() failed");
    const ssize_t n = ::write(to_child_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::vector<std::uint8_t> SubprocessModel::read_exact(std::size_t count) {
  std::vector<std::uint8_t> buf(count);
  std::size_t done = 0;
  std::string err_tail;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (done < count) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail("timed out after " + std::to_string(timeout_.count()) + " ms");
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) fail("poll() failed");
    if (ready == 0) fail("timed out after " + std::to_string(timeout_.count()) + " ms");
    const ssize_t n = ::read(from_child_, buf.data() + done, count - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("read failed: " + std::string(std::strerror(errno)));
    }
    if (n == 0) {
      fail("unexpected end of stream after " + std::to_string(done) + " of " + std::to_string(count) +
           " bytes");
    }
    done += static_cast<std::size_t>(n);
  }
  return buf;
}

ProbMap SubprocessModel::predict(const Image& img) {
  if (broken_) throw ModelError("model process '" + command_ + "' is no longer usable");
  write_all(protocol::encode_request(img));
  const auto raw_header = read_exact(protocol::kResponseHeaderSize);
  protocol::ResponseHeader header;
  try {
    header = protocol::decode_response_header(raw_header);
  } catch (const protocol::ProtocolError& e) {
    fail(e.what());
  }
  if (header.width != static_cast<std::uint32_t>(img.width()) ||
      header.height != static_cast<std::uint32_t>(img.height())) {
    fail("response is " + std::to_string(header.width) + "x" + std::to_string(header.height) +
         " for a " + std::to_string(img.width()) + "x" + std::to_string(img.height()) + " request");
  }
  const auto payload = read_exact(header.payload_size());
  try {
    return protocol::decode_response_payload(header, payload);
  } catch (const protocol::ProtocolError& e) {
    fail(e.what());
  }
}

std::unique_ptr<Model> make_model(const std::string& spec, std::chrono::milliseconds timeout) {
  if (spec.empty() || spec == "builtin" || spec == "reference") return std::make_unique<ReferenceModel>();
  return std::make_unique<SubprocessModel>(spec, timeout);
}

}  // namespace segfalsify
