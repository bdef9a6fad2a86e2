#pragma once

#include <stdexcept>
#include <string>

namespace edac {

// Shape or dimension inconsistency (graph ops, datasets, checkpoints).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// A NaN/Inf showed up where the contract requires finite values.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-supplied configuration (CLI maps this to exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File I/O and format problems. `kind` distinguishes the failure modes the
// dataset/checkpoint loaders are required to tell apart.
struct IoError : std::runtime_error {
    enum class Kind { Open, Magic, Version, Truncated, Dimension, Invalid };
    Kind kind;
    IoError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

}  // namespace edac
