#pragma once

#include "kva/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

// Brute-force cross-checks. Nothing here calls into the linear or
// shareholder solvers; the parametrisation of the constraint set is built
// from an eigendecomposition rather than the cached Cholesky factor.
namespace kva::oracle {

struct OracleConfig {
    int sphere_grid_count = 10000;
    double bisect_tol = 1e-9;
    std::optional<std::pair<double, double>> bracket; // must straddle the root
    std::uint64_t seed = 42;
    int max_doublings = 60;
    int max_iterations = 200;
    int refine_iterations = 500;
};

struct GridResult {
    Vector theta;
    double value = 0.0;      // after local refinement
    double grid_value = 0.0; // best raw grid direction
};

using Objective = std::function<double(const Vector&)>;
using ValueFunction = std::function<double(double q, double price)>;

/// Best objective over quasi-uniform directions on the unit sphere mapped onto
/// Theta(q), then refined by a compass search on the sphere. Directions:
/// d = 1 the two points, d = 2 equally spaced angles, d >= 3 seeded
/// normalised Gaussians; grids of increasing size are nested.
/// Throws InfeasibleConstraint if Theta(q) is empty.
GridResult grid_optimize(const Objective& objective, const ValidatedModel& model,
                         const CapitalConstraint& constraint, double q,
                         const OracleConfig& config = {});

/// +-10|q|(|m_Y| + sigma_y), or +-1 when that is zero.
std::pair<double, double> default_bracket(const ValidatedModel& model, double q);

/// Bisection for P with value_fn(q, P) = value_fn(0, 0); value_fn must be
/// nondecreasing in P. Throws BracketInvalid or ToleranceNotReached.
double indifference_root(const ValueFunction& value_fn, const ValidatedModel& model, double q,
                         const OracleConfig& config = {});

/// psi(0) = density of X at 0 times E[W² | X = 0], W = Y + slope (1+r+lambda),
/// X = X(theta, 0) at zero price. Throws DegenerateVariance if std(X) = 0.
double psi0_boundary_integral(const ValidatedModel& model, const CapitalConstraint& constraint,
                              const Vector& theta_star, double price_slope);

} // namespace kva::oracle
