#pragma once

#include <stdexcept>
#include <string>

namespace polaron {

/// Bad problem setup: mismatched grids, wrong array sizes, invalid parameters.
struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN/Inf or other numerical breakdown inside an algorithm.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested instance exceeds a configured dimension budget.
/// The message names the limiting parameter.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Iterative solver failed to reach its tolerance; carries the best residual.
struct ConvergenceError : std::runtime_error {
    double best_residual;
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), best_residual(residual) {}
};

}  // namespace polaron
