#pragma once

#include <stdexcept>
#include <string>

namespace slicebf {

// Failure categories map one-to-one onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept = 0;
};

/// Malformed or missing input: bad file, unknown column, non-finite response.
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Input is well-formed but the requested statistic is undefined on it
/// (zero variance, constant covariate, empty design cells).
class DegenerateError : public InputError {
 public:
  using InputError::InputError;
  int exit_code() const noexcept override { return 3; }
};

/// A configured size limit would be exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace slicebf
