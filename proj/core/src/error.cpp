#include "kva/error.hpp"

namespace kva {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::inconsistent_covariance: return "InconsistentCovariance";
    case Errc::bad_accrual: return "BadAccrual";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::capital_infeasible: return "CapitalInfeasible";
    case Errc::degenerate_drift: return "DegenerateDrift";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::infeasible: return "Infeasible";
    case Errc::max_iterations: return "MaxIterations";
    case Errc::zero_gradient: return "ZeroGradient";
    case Errc::constraint_identity_violated: return "ConstraintIdentityViolated";
    case Errc::degenerate_distribution: return "DegenerateDistribution";
    case Errc::solvency_assumption_violated: return "SolvencyAssumptionViolated";
    case Errc::bracket_invalid: return "BracketInvalid";
    case Errc::tolerance_not_reached: return "ToleranceNotReached";
    case Errc::degenerate_variance: return "DegenerateVariance";
    }
    return "Unknown";
}

bool is_validation_error(Errc code) noexcept {
    switch (code) {
    case Errc::dimension_mismatch:
    case Errc::not_positive_definite:
    case Errc::inconsistent_covariance:
    case Errc::bad_accrual:
    case Errc::invalid_argument:
        return true;
    default:
        return false;
    }
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

} // namespace kva
