#pragma once

#include <stdexcept>
#include <string>

namespace stcast {

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes: usage → 1, format/data/shape/state → 2, numeric → 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stcast
