#pragma once

#include <stdexcept>
#include <string>

namespace iclv {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV, schema mapping, traces).
class DataError : public Error {
public:
  using Error::Error;
};

/// Model specification that fails parsing or cross-reference validation.
class SpecError : public Error {
public:
  using Error::Error;
};

/// Non-finite or degenerate numerical state.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Invalid command-line usage; maps to exit status 2.
class UsageError : public Error {
public:
  using Error::Error;
};

}  // namespace iclv
