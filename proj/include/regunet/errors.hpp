#pragma once

#include <stdexcept>
#include <string>

namespace rgn {

// Invalid configuration: bad key, missing field, out-of-range value.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally invalid caller input (shape mismatch, index out of range).
class InputError : public std::runtime_error {
public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " +
                           std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Filesystem failure: unreadable/unwritable path.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure at runtime: diverged simulation, non-finite loss.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rgn
