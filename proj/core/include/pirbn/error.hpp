#pragma once

#include <stdexcept>
#include <string>

namespace pirbn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain argument.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A shape parameter of zero where a finite support width is required.
class DegenerateShape : public Error {
 public:
  using Error::Error;
};

/// Kernel with a zero trace or a nonpositive diagonal.
class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

class UnsupportedKind : public Error {
 public:
  using Error::Error;
};

/// Network/problem dimension or network-count mismatch.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pirbn
