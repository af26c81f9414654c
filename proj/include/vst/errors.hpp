#pragma once

#include <stdexcept>
#include <string>

namespace vst {

// Shape or dimension disagreement between tensors.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A documented precondition of an operation was violated.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or combination.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File or stream problem (missing file, bad format, truncation).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vst
