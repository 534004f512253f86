#pragma once

#include <stdexcept>

namespace tdens {

/// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File system or file format failure (CLI exit code 3).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The solver produced a non-finite objective, usually a too-large step size
/// (CLI exit code 4).
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Model and dataset or feature settings do not match (CLI exit code 5).
struct CompatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tdens
