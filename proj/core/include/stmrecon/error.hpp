#pragma once

#include <stdexcept>
#include <string>

namespace stmrecon {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or mismatched files.
class FormatError : public Error {
public:
  using Error::Error;
};

// A type invariant does not hold.
class InvariantError : public Error {
public:
  using Error::Error;
};

// Invalid parameters; reported before any heavy compute.
class ConfigError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Solver or decomposition failure.
class NumericError : public Error {
public:
  using Error::Error;
};

// Warnings go to stderr unless silenced; tests silence them.
void warn(const std::string &msg);
void set_warnings_enabled(bool on);

} // namespace stmrecon
