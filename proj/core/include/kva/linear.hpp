#pragma once

#include "kva/model.hpp"

namespace kva::linear {

/// Pre-discount summands of the indifference price; price() applies
/// the 1/(1+r+lambda) discount to their sum.
struct PriceDecomposition {
    double expectation = 0.0; // -q E[Y]
    double capital = 0.0;     // charge from the capital constraint
    double hedge = 0.0;       // q bᵀA⁻¹mu, excess return of the hedge
    double accrual = 1.0;     // 1 + r + lambda

    double price() const noexcept { return (expectation + capital + hedge) / accrual; }
};

struct LinearSolution {
    double chi_0 = 0.0;
    double chi_q = 0.0;
    Vector theta_star;
    double v_tilde = 0.0; // optimal value with the deal at price_exact
    double price_exact = 0.0;
    double price_approx = 0.0;
    PriceDecomposition decomposition;
};

struct RarocReport {
    double raroc0 = 0.0;
    double hurdle = 0.0;
    double expected_pnl = 0.0; // v~(0) - C0
};

/// Small-q expansion P(q) ~ a1 q + a2 q².
struct ExpansionCoefficients {
    double a1 = 0.0;
    double a2 = 0.0;

    double price(double q) const noexcept { return a1 * q + a2 * q * q; }
};

/// Lagrange multiplier of the mean maximization on Theta(q):
///   chi(q) = sqrt(muᵀA⁻¹mu) / (2 sqrt(C0²/nu² - q² (sigma_y2 - bᵀA⁻¹b))).
/// Throws CapitalInfeasible when the radicand is not positive and
/// DegenerateDrift when mu = 0.
double multiplier(const ValidatedModel& model, const CapitalConstraint& constraint, double q);

/// theta*(q) = A⁻¹mu / (2 chi(q)) - q A⁻¹b
Vector optimal_theta(const ValidatedModel& model, const CapitalConstraint& constraint, double q);

/// v~(q) at a given price, from the closed-form optimum.
double linear_value(const ValidatedModel& model, const CapitalConstraint& constraint, double q,
                    double price);

/// sup over Theta(q) of E[X] computed without the multiplier, so it stays
/// defined when mu = 0.
double max_expected_equity(const ValidatedModel& model, const CapitalConstraint& constraint,
                           double q, double price);

/// Squared radius C0²/nu² - q² (sigma_y2 - bᵀA⁻¹b) of the centred ellipsoid.
double constraint_radius_squared(const ValidatedModel& model,
                                 const CapitalConstraint& constraint, double q);

/// Exact indifference price making v~(q) = v~(0).
LinearSolution price_exact(const ValidatedModel& model, const CapitalConstraint& constraint,
                           const Deal& deal);

PriceDecomposition approx_decomposition(const ValidatedModel& model,
                                        const CapitalConstraint& constraint, const Deal& deal);

/// Second-order small-deal price.
double price_approx(const ValidatedModel& model, const CapitalConstraint& constraint,
                    const Deal& deal);

ExpansionCoefficients expansion_coefficients(const ValidatedModel& model,
                                             const CapitalConstraint& constraint);

RarocReport raroc_report(const ValidatedModel& model, const CapitalConstraint& constraint);

/// Inputs of the independent-risk approximation. The caller is responsible
/// for Y being independent of S1.
struct SimpleModelInputs {
    double var_portfolio0 = 0.0; // Var[X(theta, 0)]
    double raroc0 = 0.0;         // RAROC(theta, 0)
    double var_y = 0.0;
    double mean_y = 0.0;
    double m_var = 0.0; // VaR multiple of the standard deviation
    double q = 0.0;
    double r = 0.0;
    double lambda = 0.0;
};

/// P(q) ~ (-q E[Y] + RAROC * m q² Var[Y] / (2 sqrt(Var[X]))) / (1+r+lambda)
double simple_model_price(const SimpleModelInputs& in);

} // namespace kva::linear
