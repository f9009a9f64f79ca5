#pragma once

#include "segfalsify/image.hpp"

#include <chrono>
#include <memory>
#include <string>
#include <sys/types.h>

namespace segfalsify {

/// Segmentation model under test, queried as a black box.
class Model {
 public:
  virtual ~Model() = default;
  virtual ProbMap predict(const Image& img) = 0;
  virtual std::string describe() const = 0;
};

/// Deterministic in-process stand-in for a trained segmenter: Rec. 601 luma,
/// 3x3 box filter with edge replication, then smoothstep between 0.55 and 0.75.
class ReferenceModel final : public Model {
 public:
  static constexpr double kLow = 0.55;
  static constexpr double kHigh = 0.75;

  ProbMap predict(const Image& img) override;
  std::string describe() const override { return "builtin"; }
};

/// Clamped cubic 3u^2 - 2u^3 with u = (x - low) / (high - low).
double smoothstep(double low, double high, double x);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model served by a child process speaking the framed stdin/stdout protocol
/// (see protocol.hpp). The command runs under /bin/sh -c.
class SubprocessModel final : public Model {
 public:
  explicit SubprocessModel(std::string command,
                           std::chrono::milliseconds timeout = std::chrono::seconds(30),
                           std::uint16_t protocol_version = 1);
  ~SubprocessModel() override;

  SubprocessModel(const SubprocessModel&) = delete;
  SubprocessModel& operator=(const SubprocessModel&) = delete;

  ProbMap predict(const Image& img) override;
  std::string describe() const override { return command_; }

 private:
  void write_all(const std::vector<std::uint8_t>& bytes);
  std::vector<std::uint8_t> read_exact(std::size_t n);
  [[noreturn]] void fail(const std::string& what);
  std::string drain_stderr();
  void shutdown();

  std::string command_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int child_err_ = -1;
  bool broken_ = false;
};

/// "builtin" selects ReferenceModel; anything else is a subprocess command.
std::unique_ptr<Model> make_model(const std::string& spec,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(30));

}  // namespace segfalsify
