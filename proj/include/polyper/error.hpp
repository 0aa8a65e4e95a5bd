#pragma once

#include <stdexcept>
#include <string>

namespace polyper {

/// Base error for all failures raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration (bad key, bad enum value, out-of-range field).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Dataset problem: missing file, unreadable image, size mismatch.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

/// Tensor or image dimensions violate an operation's contract.
class SizingError : public Error {
public:
    explicit SizingError(const std::string& what) : Error(what) {}
};

}  // namespace polyper
