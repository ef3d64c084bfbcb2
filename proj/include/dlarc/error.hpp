#pragma once

#include <stdexcept>
#include <string>

namespace dlarc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad flag, bad JSON field, out-of-range option).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Failure inside the training loop (non-finite loss, empty data).
class TrainError : public Error {
 public:
  using Error::Error;
};

/// Call from a catch block: rethrows the active dlarc error with
/// "<where>: " prepended, keeping its type.
[[noreturn]] inline void rethrow_with_context(const std::string& where) {
  const std::string prefix = where + ": ";
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const TrainError& e) {
    throw TrainError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace dlarc
