#pragma once

#include <stdexcept>
#include <string>

namespace lepus {

// Base error; `code()` is a stable machine-readable tag used by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& message) : Error("value_error", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format_error", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

}  // namespace lepus
