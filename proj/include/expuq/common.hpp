#pragma once

#include <stdexcept>
#include <string>

namespace expuq {

inline constexpr const char* version = "0.1.0";

// Base class for all library errors. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied value (distribution parameters, config fields, shapes).
struct InvalidParameterError : Error {
  using Error::Error;
};

// Degenerate input that makes an estimator undefined (constant samples,
// all-minus-infinity weights, zero scale).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Factorization / rank / conditioning failures inside the samplers.
struct NumericalError : Error {
  using Error::Error;
};

// Config file schema violations.
struct ConfigError : Error {
  using Error::Error;
};

// File I/O and data file schema problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace expuq
