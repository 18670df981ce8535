#pragma once

#include <stdexcept>
#include <string>

namespace hallucinet {

/// Invalid or out-of-range configuration. Messages name the offending field.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent input data (containers, manifests, datasets).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hallucinet
