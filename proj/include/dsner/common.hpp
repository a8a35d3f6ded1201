#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dsner {

/// Base class for all library errors. Precondition violations throw
/// std::invalid_argument instead; everything else derives from Error.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read, or written.
class IoError : public Error {
public:
  using Error::Error;
};

/// Malformed input data. Carries the 1-based line number when known
/// (0 when the failure is not tied to a specific line).
class ParseError : public Error {
public:
  explicit ParseError(const std::string& message) : Error(message), line_(0) {}
  ParseError(const std::string& message, long line)
      : Error(message + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

/// FNV-1a 64-bit hash, used for checkpoint and config fingerprints.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace dsner
