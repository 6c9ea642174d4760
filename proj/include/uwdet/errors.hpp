#pragma once

#include <stdexcept>
#include <string>

namespace uwdet {

// Everything thrown by the library derives from Error so the CLI can map
// failures to exit codes uniformly.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or shape disagreement between operands.
class ShapeError : public Error {
public:
  using Error::Error;
};

// A caller violated an operation precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

// Non-finite value (NaN/Inf) produced or stored.
class NumericError : public Error {
public:
  using Error::Error;
};

// Out-of-range node or element index.
class IndexError : public Error {
public:
  using Error::Error;
};

// Invalid user-supplied input (dataset, image dimensions, ranges).
class InputError : public Error {
public:
  using Error::Error;
};

// Malformed file content; message names the offending byte offset or line.
class FormatError : public Error {
public:
  using Error::Error;
};

// Bad run configuration (unknown keys, contradictory settings).
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace uwdet
