#pragma once

#include <stdexcept>
#include <string>

namespace dac {

/// Invalid configuration or violated call contract (bad hyperparameter,
/// shape mismatch at an API boundary). Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Shape or dimension mismatch between operands.
class DimensionError : public ConfigError {
public:
    explicit DimensionError(const std::string& what) : ConfigError(what) {}
};

enum class DataErrorCode {
    Io,            // file missing / unreadable / unwritable
    BadMagic,      // wrong leading magic number
    Truncated,     // payload shorter than the header promises
    CountMismatch, // paired files disagree on record count
    Parse,         // malformed text (ragged row, non-numeric cell, bad manifest)
};

/// Unreadable or malformed input data. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    DataError(DataErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    DataErrorCode code() const { return code_; }

private:
    DataErrorCode code_;
};

/// Numeric failure during computation: NaN/Inf values, collapsed (near-zero)
/// embedding rows, undefined losses. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dac
