#include "kva/linear.hpp"

#include "kva/error.hpp"

#include <cmath>
#include <limits>

namespace kva::linear {
namespace {

void require_drift(const ValidatedModel& model) {
    const double scale = std::max(model.raw().m1.lpNorm<Eigen::Infinity>(),
                                  model.accrued_spot().lpNorm<Eigen::Infinity>());
    const double eps = 64.0 * std::numeric_limits<double>::epsilon();
    if (!(model.mu_ainv_mu() > 0.0) ||
        model.excess_mean().lpNorm<Eigen::Infinity>() <= eps * scale)
        throw Error(Errc::degenerate_drift,
                    "excess mean mu is zero: the capital multiplier vanishes");
}

} // namespace

double constraint_radius_squared(const ValidatedModel& model,
                                 const CapitalConstraint& constraint, double q) {
    constraint.validate();
    const double budget = constraint.c0 / constraint.nu;
    return budget * budget - q * q * model.residual_variance();
}

double multiplier(const ValidatedModel& model, const CapitalConstraint& constraint, double q) {
    const double radius2 = constraint_radius_squared(model, constraint, q);
    if (!(radius2 > 0.0))
        throw Error(Errc::capital_infeasible,
                    "unhedgeable variance of the deal exceeds the capital budget");
    require_drift(model);
    return std::sqrt(model.mu_ainv_mu()) / (2.0 * std::sqrt(radius2));
}

Vector optimal_theta(const ValidatedModel& model, const CapitalConstraint& constraint,
                     double q) {
    const double chi = multiplier(model, constraint, q);
    return model.ainv_mu() / (2.0 * chi) - q * model.ainv_b();
}

double linear_value(const ValidatedModel& model, const CapitalConstraint& constraint, double q,
                    double price) {
    const double chi = multiplier(model, constraint, q);
    const auto& m = model.raw();
    return q * m.m_y + model.mu_ainv_mu() / (2.0 * chi) - q * model.b_ainv_mu() +
           (constraint.c0 + price) * model.accrual();
}

double max_expected_equity(const ValidatedModel& model, const CapitalConstraint& constraint,
                           double q, double price) {
    const double radius2 = constraint_radius_squared(model, constraint, q);
    if (radius2 < 0.0)
        throw Error(Errc::capital_infeasible, "admissible set Theta(q) is empty");
    // theta = -q A⁻¹b + phi with phiᵀA phi = radius², so sup phiᵀmu = radius sqrt(muᵀA⁻¹mu).
    return q * (model.raw().m_y - model.b_ainv_mu()) +
           std::sqrt(radius2) * std::sqrt(std::max(0.0, model.mu_ainv_mu())) +
           (constraint.c0 + price) * model.accrual();
}

LinearSolution price_exact(const ValidatedModel& model, const CapitalConstraint& constraint,
                           const Deal& deal) {
    const double q = deal.q;
    LinearSolution sol;
    sol.chi_0 = multiplier(model, constraint, 0.0);
    sol.chi_q = multiplier(model, constraint, q);

    auto& dec = sol.decomposition;
    dec.expectation = -q * model.raw().m_y;
    dec.capital = 0.5 * (1.0 / sol.chi_0 - 1.0 / sol.chi_q) * model.mu_ainv_mu();
    dec.hedge = q * model.b_ainv_mu();
    dec.accrual = model.accrual();

    sol.price_exact = dec.price();
    sol.price_approx = price_approx(model, constraint, deal);
    sol.theta_star = model.ainv_mu() / (2.0 * sol.chi_q) - q * model.ainv_b();
    sol.v_tilde = linear_value(model, constraint, q, sol.price_exact);
    return sol;
}

PriceDecomposition approx_decomposition(const ValidatedModel& model,
                                        const CapitalConstraint& constraint, const Deal& deal) {
    // Same preconditions as the exact price.
    multiplier(model, constraint, 0.0);
    multiplier(model, constraint, deal.q);

    const double q = deal.q;
    PriceDecomposition dec;
    dec.expectation = -q * model.raw().m_y;
    dec.capital = 0.5 * model.residual_variance() * q * q * constraint.nu / constraint.c0 *
                  std::sqrt(model.mu_ainv_mu());
    dec.hedge = q * model.b_ainv_mu();
    dec.accrual = model.accrual();
    return dec;
}

double price_approx(const ValidatedModel& model, const CapitalConstraint& constraint,
                    const Deal& deal) {
    return approx_decomposition(model, constraint, deal).price();
}

ExpansionCoefficients expansion_coefficients(const ValidatedModel& model,
                                             const CapitalConstraint& constraint) {
    multiplier(model, constraint, 0.0);
    const double k = model.accrual();
    ExpansionCoefficients c;
    c.a1 = (-model.raw().m_y + model.b_ainv_mu()) / k;
    c.a2 = 0.5 * model.residual_variance() * constraint.nu / constraint.c0 *
           std::sqrt(model.mu_ainv_mu()) / k;
    return c;
}

RarocReport raroc_report(const ValidatedModel& model, const CapitalConstraint& constraint) {
    constraint.validate();
    const auto& m = model.raw();
    const double drift = std::sqrt(std::max(0.0, model.mu_ainv_mu()));
    RarocReport rep;
    rep.hurdle = drift / constraint.nu + m.r + m.lambda;
    rep.expected_pnl = constraint.c0 / constraint.nu * drift + constraint.c0 * (m.r + m.lambda);
    rep.raroc0 = rep.expected_pnl / constraint.c0;
    return rep;
}

double simple_model_price(const SimpleModelInputs& in) {
    if (!(in.var_portfolio0 > 0.0))
        throw Error(Errc::zero_variance, "portfolio variance must be positive");
    const double accrual = 1.0 + in.r + in.lambda;
    if (!(accrual > 0.0)) throw Error(Errc::bad_accrual, "1 + r + lambda must be positive");
    const double charge =
        in.raroc0 * 0.5 * in.m_var * in.q * in.q * in.var_y / std::sqrt(in.var_portfolio0);
    return (-in.q * in.mean_y + charge) / accrual;
}

} // namespace kva::linear
