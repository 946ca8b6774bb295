#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kva {

enum class Errc {
    // input validation
    dimension_mismatch,
    not_positive_definite,
    inconsistent_covariance,
    bad_accrual,
    invalid_argument,
    // numerical failures
    capital_infeasible,
    degenerate_drift,
    zero_variance,
    no_convergence,
    infeasible,
    max_iterations,
    zero_gradient,
    constraint_identity_violated,
    degenerate_distribution,
    solvency_assumption_violated,
    bracket_invalid,
    tolerance_not_reached,
    degenerate_variance,
};

std::string_view to_string(Errc code) noexcept;

// True for errors caused by bad inputs rather than by the numerics.
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace kva
