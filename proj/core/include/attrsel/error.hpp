#pragma once

#include <stdexcept>
#include <string>

namespace attrsel {

/// Malformed input or a violated data invariant (parse errors, bad indices,
/// missing embeddings, shape mismatches).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite loss, gradient or parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace attrsel
