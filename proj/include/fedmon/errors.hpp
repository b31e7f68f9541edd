#pragma once

#include <stdexcept>
#include <string>

namespace fedmon {

// Invalid parameters or shapes. Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A factorization or solve failed where the invariants say it cannot.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input file problems: missing columns, unparseable cells, unreadable paths.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedmon
