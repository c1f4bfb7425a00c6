#pragma once

// Error taxonomy used across the library. Everything derives from
// cacheflow::Error so callers can catch the whole family at once.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cacheflow {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or width disagreement between tensors / modules.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

// NaN/Inf produced by a numeric op, or detected in inputs.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// API used out of order (e.g. backward before any forward was recorded).
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error("state error: " + msg) {}
};

// Caller handed in malformed data (empty sequence, n out of range, ...).
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error("input error: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("i/o error: " + msg) {}
};

// Malformed file contents; carries the byte offset of the failed read.
struct ParseError : Error {
    ParseError(const std::string& msg, std::uint64_t byte_offset)
        : Error("parse error: " + msg + " at byte offset " + std::to_string(byte_offset)),
          offset(byte_offset) {}
    std::uint64_t offset;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace cacheflow
