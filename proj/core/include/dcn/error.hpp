#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcn {

/// Raised when an operation receives arguments that break its preconditions
/// (shape mismatch, out-of-range index, invalid hyper-parameter).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dataset ingestion failure. The message names the file and byte offset.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& file, std::size_t offset, const std::string& what)
      : std::runtime_error(file + " @ byte " + std::to_string(offset) + ": " + what),
        file_(file),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network configuration parse/validation error with the offending line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcn
