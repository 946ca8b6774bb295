#pragma once

#include <Eigen/Core>

#include <memory>
#include <span>

namespace kva {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Joint Gaussian law of the liquid securities S1 and the deal payoff Y,
/// plus time-0 prices and the per-period accrual rates.
///
/// Cov[(S1, Y)] = [[a, b], [bᵀ, sigma_y2]].
struct MarketModel {
    Vector s0;          // time-0 prices
    Vector m1;          // E[S1]
    double r = 0.0;     // risk-free rate per period
    double lambda = 0.0; // funding spread, borrowing and lending
    Matrix a;           // Cov[S1]
    Vector b;           // Cov[S1, Y]
    double sigma_y2 = 0.0;
    double m_y = 0.0;

    int dim() const noexcept { return static_cast<int>(s0.size()); }
};

/// Capital C0 and the multiplier nu: admissible strategies satisfy
/// C0 = nu * std(X(theta, q)).
struct CapitalConstraint {
    double c0 = 0.0;
    double nu = 0.0;

    void validate() const;
};

/// Quantity q bought by the client; payoffs are seen from the bank.
struct Deal {
    double q = 0.0;
};

/// Immutable, validated market model with cached factorizations.
/// Copies share the cached state.
class ValidatedModel {
public:
    const MarketModel& raw() const noexcept;
    int dim() const noexcept;

    /// 1 + r + lambda
    double accrual() const noexcept;

    /// mu = m1 - s0 (1 + r + lambda)
    const Vector& excess_mean() const noexcept;

    /// s0 (1 + r + lambda)
    const Vector& accrued_spot() const noexcept;

    const Matrix& a_inverse() const noexcept;

    /// Lower Cholesky factor of A.
    const Matrix& a_factor() const noexcept;

    /// Lower-triangular factor L of the full (d+1)x(d+1) covariance.
    const Matrix& covariance_factor() const noexcept;

    Matrix full_covariance() const;

    /// sigma_y2 - bᵀA⁻¹b via the Schur complement.
    double residual_variance() const noexcept;

    /// Squared last diagonal entry of the full factor (clamped at zero).
    double residual_variance_from_factor() const noexcept;

    double mu_ainv_mu() const noexcept;
    double b_ainv_b() const noexcept;
    double b_ainv_mu() const noexcept;
    const Vector& ainv_mu() const noexcept;
    const Vector& ainv_b() const noexcept;

    double sigma_y() const noexcept;

private:
    struct Impl;
    explicit ValidatedModel(std::shared_ptr<const Impl> impl);
    std::shared_ptr<const Impl> impl_;

    friend ValidatedModel validate_model(const MarketModel& model);
};

/// Checks dimensions, positive definiteness of A, the block covariance
/// and the accrual factor; throws kva::Error on failure.
ValidatedModel validate_model(const MarketModel& model);

Vector excess_mean(const ValidatedModel& model);

/// Pathwise equity at time 1:
///   X(theta, q) = q Y + thetaᵀ(S1 - S0 (1+r+lambda)) + (C0 + P)(1+r+lambda)
class EquityEvaluator {
public:
    EquityEvaluator(const ValidatedModel& model, double c0, Vector theta, double q,
                    double price);

    double operator()(std::span<const double> s1, double y) const;

    /// Evaluates a packed draw row (s1..., y).
    double on_row(const double* row) const noexcept {
        double x = constant_ + q_ * row[dim_];
        for (int i = 0; i < dim_; ++i) x += theta_[i] * row[i];
        return x;
    }

    /// Closed-form moments under the Gaussian law.
    double mean() const;
    double stddev() const;

    int dim() const noexcept { return dim_; }
    const Vector& theta() const noexcept { return theta_; }
    double q() const noexcept { return q_; }
    double price() const noexcept { return price_; }
    double c0() const noexcept { return c0_; }
    const ValidatedModel& model() const noexcept { return model_; }

private:
    ValidatedModel model_;
    double c0_;
    Vector theta_;
    double q_;
    double price_;
    int dim_;
    double constant_; // (C0 + P) k - thetaᵀ s0 k
};

double equity_value(const EquityEvaluator& ev, std::span<const double> s1, double y);

} // namespace kva
