#pragma once

#include <stdexcept>
#include <string>

namespace qfuse {

/// Tensor/map shape disagreement (wrong rank, mismatched extents, odd pooling size, ...).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API contract violation (non-scalar loss, empty batch, missing grad, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or missing configuration (unknown key, out-of-range value, empty dataset).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / stream failure (unreadable path, short read, unwritable directory).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed file content; message names the offending path.
struct ParseError : IoError {
    explicit ParseError(const std::string& msg) : IoError(msg) {}
};

}  // namespace qfuse
