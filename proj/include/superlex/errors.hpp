#pragma once

#include <stdexcept>
#include <string>

namespace superlex {

// Every error carries a short machine-parsable tag; the CLI prints it first.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& what)
      : std::runtime_error(what), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct TrainingError : Error {
  TrainingError(const std::string& w, long step) : Error("training", w), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};
struct MisuseError : Error {
  explicit MisuseError(const std::string& w) : Error("misuse", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct MissingInputError : Error {
  explicit MissingInputError(const std::string& w) : Error("missing-input", w) {}
};

}  // namespace superlex
