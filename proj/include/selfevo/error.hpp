#pragma once

#include <stdexcept>
#include <string>

namespace selfevo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or configuration value is out of range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A lookup key is absent (external embedding table, vocabulary).
class MissingKey : public Error {
 public:
  explicit MissingKey(const std::string& key)
      : Error("unknown key: \"" + key + "\""), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// A gold answer was read while the label seal was active.
class LabelLeak : public Error {
 public:
  using Error::Error;
};

/// A computation produced a NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace selfevo
