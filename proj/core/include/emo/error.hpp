#pragma once

#include <stdexcept>
#include <string>

namespace emo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents, channel counts or kernel sizes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied value outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace emo
