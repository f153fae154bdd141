#pragma once

#include <stdexcept>
#include <string>

namespace pan {

/// Tensor/layer dimension mismatch.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Kernel size, stride, scale factor, or model configuration outside the supported set.
struct UnsupportedError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Unreadable/corrupt files, checkpoint mismatches, missing inputs.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient, divergence.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Config file syntax or value errors.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_shape(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

inline void check_supported(bool ok, const std::string& msg) {
    if (!ok) throw UnsupportedError(msg);
}

}  // namespace pan
