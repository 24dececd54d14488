#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace addnet {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateLandmarks : public Error {
 public:
  using Error::Error;
};

class DegenerateHull : public Error {
 public:
  using Error::Error;
};

class IncompatibleResolution : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientPool : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Raised by manifest loading; carries every path that could not be found.
class MissingFile : public Error {
 public:
  explicit MissingFile(std::vector<std::string> paths)
      : Error(describe(paths)), paths_(std::move(paths)) {}

  const std::vector<std::string>& paths() const { return paths_; }

 private:
  static std::string describe(const std::vector<std::string>& paths) {
    std::string msg = "missing file(s):";
    for (const auto& p : paths) msg += " " + p;
    return msg;
  }
  std::vector<std::string> paths_;
};

class EmptySplit : public Error {
 public:
  using Error::Error;
};

class NoEligibleSequence : public Error {
 public:
  using Error::Error;
};

class BadClipLength : public Error {
 public:
  using Error::Error;
};

class ModeMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DivergenceDetected : public Error {
 public:
  DivergenceDetected(long step, const std::string& what)
      : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Non-fatal diagnostics collected by operations that degrade gracefully.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink) sink->push_back(std::move(message));
}

}  // namespace addnet
