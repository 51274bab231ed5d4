#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nlw {

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on a value (not a shape) was violated.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf reached a place that must stay finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. The message names the byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment-file validation failure carrying every problem found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out;
    for (const auto& p : problems) {
      if (!out.empty()) out += '\n';
      out += p;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

}  // namespace nlw
