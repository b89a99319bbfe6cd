#pragma once

#include <stdexcept>
#include <string>

namespace seqfreq {

/// Violated precondition or invalid configuration value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value produced where a finite one is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data encountered in a file or record set.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace seqfreq
