#pragma once

#include <stdexcept>
#include <string>

namespace ssdgl {

/// Shape or rank mismatch between tensors, or an op precondition on
/// dimensions that does not hold.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid configuration value (bad range, unknown key, incompatible
/// channel counts).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// File format / truncation / missing-file problems.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numeric check failed in a way that invalidates the computation
/// (non-finite loss, non-finite evaluation inside a gradient check).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training run aborted; any checkpoint written before the abort is intact.
struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ssdgl
