#pragma once
// Exception hierarchy. Input problems raise std::invalid_argument (or
// ParseError with a line number); failures of the numerical machinery raise
// NumericalError subclasses so callers can distinguish usage errors (CLI exit
// code 1) from numerical breakdowns (exit code 2).

#include <stdexcept>
#include <string>

namespace cmekit {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Explicit Euler step too large: h * total exit rate >= 1 at some state.
struct StepSizeError : NumericalError {
    StepSizeError(const std::string& msg, std::string state_repr)
        : NumericalError(msg), state(std::move(state_repr)) {}
    std::string state;
};

/// An iterative scheme stopped without reaching its tolerance.
struct ConvergenceError : NumericalError {
    ConvergenceError(const std::string& msg, double residual_norm, int iterations)
        : NumericalError(msg), residual(residual_norm), iters(iterations) {}
    double residual;
    int iters;
};

/// Constraints admit no representable solution (e.g. non-integrable maximum
/// entropy ansatz for every feasible parameter value).
struct InfeasibleError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace cmekit
