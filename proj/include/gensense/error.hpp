#pragma once

#include <stdexcept>
#include <string>

namespace gensense {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents of tensors, parameters or layers do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid user-facing configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace gensense
