#pragma once

#include <stdexcept>
#include <string>

namespace wdistill {

// Root of every error the library raises. The C API maps the subclasses to
// status codes, so keep the split between "caller did something wrong" and
// "the run went wrong" meaningful.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wdistill
