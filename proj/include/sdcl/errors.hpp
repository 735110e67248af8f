#pragma once

#include <stdexcept>
#include <string>

namespace sdcl {

/// Caller broke a documented precondition (shape mismatch, bad argument).
struct ContractViolation : std::invalid_argument {
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Shape/dimension conflicts, a common enough contract break to name.
struct DimensionError : ContractViolation {
    explicit DimensionError(const std::string& what) : ContractViolation(what) {}
};

/// A numeric routine could not produce a trustworthy result
/// (non-convergence, ill-conditioned input). Message carries diagnostics.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed external data (dataset files, configs).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace sdcl
