#pragma once

#include "kva/linear.hpp"
#include "kva/model.hpp"
#include "kva/montecarlo.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace kva::shareholder {

/// Normalisation of the constraint function g. With nu_squared,
/// g = nu²(thetaᵀA theta + 2q thetaᵀb + sigma_y2 q²) and the constraint is g = C0².
/// With unit, the nu² factor is dropped and the constraint is g = C0²/nu².
/// The multiplier scales inversely, so assembled prices do not depend on the choice.
enum class ConstraintScaling { unit, nu_squared };

double scaling_factor(ConstraintScaling scaling, const CapitalConstraint& constraint);

/// The limited-liability objective f = E_n[X⁺] on a fixed batch (sample
/// average approximation) and the closed-form constraint g.
class ObjectivePair {
public:
    ObjectivePair(const ValidatedModel& model, const CapitalConstraint& constraint,
                  const mc::SampleBatch& batch,
                  ConstraintScaling scaling = ConstraintScaling::nu_squared, unsigned workers = 0);

    struct Evaluation {
        double value = 0.0;    // E_n[X⁺]
        Vector gradient;       // E_n[1{X > 0} (S1 - S0 (1+r+lambda))]
        double survival = 0.0; // fraction of rows with X > 0
    };

    /// One pass over the batch; sums are reduced in chunk order.
    Evaluation evaluate(const Vector& theta, double q, double price) const;

    mc::Estimate f(const Vector& theta, double q, double price) const;

    double g(const Vector& theta, double q) const;
    Vector g_theta(const Vector& theta, double q) const;
    double g_q(const Vector& theta, double q) const;
    double g_qq() const;
    Matrix g_theta_theta() const;
    /// Right-hand side of the constraint g = target.
    double target() const;

    double kappa() const noexcept { return kappa_; }
    ConstraintScaling scaling() const noexcept { return scaling_; }
    const ValidatedModel& model() const noexcept { return model_; }
    const CapitalConstraint& constraint() const noexcept { return constraint_; }
    const mc::SampleBatch& batch() const noexcept { return *batch_; }
    unsigned workers() const noexcept { return workers_; }

private:
    ValidatedModel model_;
    CapitalConstraint constraint_;
    const mc::SampleBatch* batch_;
    ConstraintScaling scaling_;
    double kappa_;
    unsigned workers_;
};

struct OptimizerOptions {
    int restarts = 20;
    int max_iterations = 200;
    double tolerance = 1e-6;            // projected gradient / gradient norm
    double nonsmooth_tolerance = 1e-4;  // accepted when no ascent step exists
    std::uint64_t seed = 0x5eed;
    bool warm_start_linear = true;      // add the closed-form optimum as a start
    unsigned workers = 0;
};

struct ThetaOptimum {
    Vector theta;
    mc::Estimate value;        // f(theta*, q, P)
    double stationarity = 0.0; // projected gradient norm relative to the gradient
    int iterations = 0;
    int converged_starts = 0;
};

/// Maximises E_n[X⁺] over the ellipsoid Theta(q). theta is written as
/// -q A⁻¹b + R L⁻ᵀu with A = L Lᵀ and |u| = 1, and u climbs by projected
/// gradient ascent with backtracking. The first trial step is u = grad/|grad|.
/// Throws Infeasible if Theta(q) is empty, MaxIterations if no start converges.
ThetaOptimum optimize_theta(const ValidatedModel& model, const CapitalConstraint& constraint,
                            double q, double price, const mc::SampleBatch& batch,
                            const OptimizerOptions& options = {});

/// chi(q) = (grad f . grad g) / (grad g . grad g) at theta*, grad f pathwise.
mc::Estimate multiplier_numeric(const ValidatedModel& model, const CapitalConstraint& constraint,
                                double q, double price, const Vector& theta_star,
                                const mc::SampleBatch& batch,
                                ConstraintScaling scaling = ConstraintScaling::nu_squared,
                                unsigned workers = 0);

struct ThetaDerivative {
    Vector value;                   // d theta*/dq at q0
    double dq = 0.0;
    double identity_residual = 0.0; // relative residual of dg/dq = 0
    ThetaOptimum plus;
    ThetaOptimum minus;
};

/// Central difference of the optimum over q0 +- dq on the same batch, with
/// the price following price_fn. Throws ConstraintIdentityViolated when
/// dg/dq + grad g . theta' differs from zero by more than 1e-3 relative.
ThetaDerivative theta_derivative(const ValidatedModel& model, const CapitalConstraint& constraint,
                                 double q0, const Vector& theta_at_q0,
                                 const std::function<double(double)>& price_fn,
                                 const mc::SampleBatch& batch, double dq,
                                 const OptimizerOptions& options = {});

/// Hessian of E[X⁺] in theta under the Gaussian law:
/// density of X at 0 times E[mu_hat mu_hatᵀ | X = 0].
Matrix boundary_hessian(const ValidatedModel& model, double c0, const Vector& theta, double q,
                        double price);

/// sum_ij (chi g_ij - f_ij) theta'_j theta'_i
double contract_curvature(const Matrix& g_hessian, const Matrix& f_hessian,
                          const Vector& theta_prime, double chi);

/// Curvature term at q = 0 with the analytic boundary Hessian.
double curvature_term(const ValidatedModel& model, const CapitalConstraint& constraint,
                      const Vector& theta_star, const Vector& theta_prime, double chi0,
                      ConstraintScaling scaling = ConstraintScaling::nu_squared);

/// Ingredients of the second-order marginal price, all at q = 0.
struct PriceComponents {
    double survival = 1.0;       // P[D^c]
    double survival_y = 0.0;     // E[1_{D^c} Y]
    double chi0 = 0.0;
    double chi0_prime = 0.0;
    double g_q = 0.0;            // dg/dq = 2 kappa bᵀtheta*
    double g_qq = 0.0;           // 2 kappa sigma_y2
    double psi0 = 0.0;
    double curvature = 0.0;
    double accrual = 1.0;
};

/// a1 = (-E[1_{D^c}Y] + chi g_q) / (P[D^c] k)
/// a2 = -(psi - 2 chi' g_q - chi g_qq + C) / (2 k P[D^c])
linear::ExpansionCoefficients assemble_price_coefficients(const PriceComponents& c);

struct ShareholderSolution {
    Vector theta_star;
    mc::Estimate value;
    double chi0 = 0.0;
    double chi0_prime = 0.0;
    ConstraintScaling scaling = ConstraintScaling::nu_squared;
    double kappa = 1.0;
    Vector theta_prime;
    mc::Psi0Estimate psi0;
    double curvature = 0.0;
    mc::Estimate survival;
    PriceComponents components;
    linear::ExpansionCoefficients price_coeffs;
    double a1_std_error = 0.0;
    double a2_std_error = 0.0;
    double a1_a2_covariance = 0.0; // of the coefficient estimators
    double dq = 0.0;
    double stationarity = 0.0;

    /// Multiplier expressed for g without the nu² factor.
    double chi0_linear_units() const noexcept { return chi0 * kappa; }
    double chi0_prime_linear_units() const noexcept { return chi0_prime * kappa; }
    double price(double q) const noexcept { return price_coeffs.price(q); }
    double price_std_error(double q) const noexcept;
};

struct MarginalPriceOptions {
    OptimizerOptions optimizer;
    ConstraintScaling scaling = ConstraintScaling::nu_squared;
    std::optional<double> dq;  // default 0.01 (C0/nu) / sigma_y
    int max_dq_halvings = 8;
};

/// Default step for theta and chi derivatives in q.
double default_dq(const ValidatedModel& model, const CapitalConstraint& constraint);

/// Default psi(0) step grid (0.1, 0.05, 0.025) (C0/nu) / sigma_y.
std::vector<double> default_h_grid(const ValidatedModel& model,
                                   const CapitalConstraint& constraint);

/// Second-order marginal price of the limited-liability problem. Never
/// returns partially populated coefficients: any estimator failure throws.
ShareholderSolution marginal_price(const ValidatedModel& model,
                                   const CapitalConstraint& constraint,
                                   const mc::SampleBatch& batch, std::span<const double> h_grid,
                                   const MarginalPriceOptions& options = {});

struct LinearReductionReport {
    // Relative errors against the whole-bank closed forms.
    double chi0 = 0.0;
    double chi0_prime = 0.0; // |chi'(0)| (C0/nu)/(sigma_y chi(0))
    double theta = 0.0;
    double curvature = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double default_probability = 0.0;
    linear::ExpansionCoefficients linear_coeffs;
    linear::ExpansionCoefficients shareholder_coeffs;

    bool within(double tol) const noexcept {
        return chi0 <= tol && chi0_prime <= tol && theta <= tol && curvature <= tol &&
               a1 <= tol && a2 <= tol;
    }
};

LinearReductionReport compare_with_linear(const ValidatedModel& model,
                                          const CapitalConstraint& constraint,
                                          const ShareholderSolution& solution);

/// Runs marginal_price and compares every ingredient with the closed forms.
LinearReductionReport linear_reduction_check(const ValidatedModel& model,
                                             const CapitalConstraint& constraint,
                                             const mc::SampleBatch& batch,
                                             std::span<const double> h_grid,
                                             const MarginalPriceOptions& options = {});

/// Same comparison with closed-form ingredients (theta from the linear
/// optimum, no default) in place of the estimators.
LinearReductionReport linear_reduction_bypass(const ValidatedModel& model,
                                              const CapitalConstraint& constraint,
                                              ConstraintScaling scaling =
                                                  ConstraintScaling::nu_squared);

} // namespace kva::shareholder
