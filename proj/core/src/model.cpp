#include "kva/model.hpp"

#include "kva/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace kva {

struct ValidatedModel::Impl {
    MarketModel raw;
    double accrual = 1.0;
    Vector mu;
    Vector spot_accrued;
    Matrix a_inv;
    Matrix a_factor;
    Matrix full_factor;
    Vector ainv_mu;
    Vector ainv_b;
    double mu_ainv_mu = 0.0;
    double b_ainv_b = 0.0;
    double b_ainv_mu = 0.0;
    double residual = 0.0;
};

namespace {

constexpr double kPivotTolerance = 1e-12;
constexpr double kResidualTolerance = 1e-10;

bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace

void CapitalConstraint::validate() const {
    if (!(std::isfinite(c0) && c0 > 0.0))
        throw Error(Errc::invalid_argument, "capital c0 must be positive and finite");
    if (!(std::isfinite(nu) && nu > 0.0))
        throw Error(Errc::invalid_argument, "multiplier nu must be positive and finite");
}

ValidatedModel::ValidatedModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

const MarketModel& ValidatedModel::raw() const noexcept { return impl_->raw; }
int ValidatedModel::dim() const noexcept { return impl_->raw.dim(); }
double ValidatedModel::accrual() const noexcept { return impl_->accrual; }
const Vector& ValidatedModel::excess_mean() const noexcept { return impl_->mu; }
const Vector& ValidatedModel::accrued_spot() const noexcept { return impl_->spot_accrued; }
const Matrix& ValidatedModel::a_inverse() const noexcept { return impl_->a_inv; }
const Matrix& ValidatedModel::a_factor() const noexcept { return impl_->a_factor; }
const Matrix& ValidatedModel::covariance_factor() const noexcept { return impl_->full_factor; }
double ValidatedModel::residual_variance() const noexcept { return impl_->residual; }
double ValidatedModel::mu_ainv_mu() const noexcept { return impl_->mu_ainv_mu; }
double ValidatedModel::b_ainv_b() const noexcept { return impl_->b_ainv_b; }
double ValidatedModel::b_ainv_mu() const noexcept { return impl_->b_ainv_mu; }
const Vector& ValidatedModel::ainv_mu() const noexcept { return impl_->ainv_mu; }
const Vector& ValidatedModel::ainv_b() const noexcept { return impl_->ainv_b; }
double ValidatedModel::sigma_y() const noexcept { return std::sqrt(impl_->raw.sigma_y2); }

double ValidatedModel::residual_variance_from_factor() const noexcept {
    const int d = dim();
    const double l = impl_->full_factor(d, d);
    return l * l;
}

Matrix ValidatedModel::full_covariance() const {
    const auto& m = impl_->raw;
    const int d = m.dim();
    Matrix cov(d + 1, d + 1);
    cov.topLeftCorner(d, d) = m.a;
    cov.topRightCorner(d, 1) = m.b;
    cov.bottomLeftCorner(1, d) = m.b.transpose();
    cov(d, d) = m.sigma_y2;
    return cov;
}

ValidatedModel validate_model(const MarketModel& model) {
    const auto d = model.s0.size();
    if (d == 0) throw Error(Errc::dimension_mismatch, "model needs at least one security");
    if (model.m1.size() != d || model.b.size() != d || model.a.rows() != d ||
        model.a.cols() != d)
        throw Error(Errc::dimension_mismatch,
                    "s0, m1, b and A must all have dimension " + std::to_string(d));
    if (!all_finite(model.s0) || !all_finite(model.m1) || !all_finite(model.b) ||
        !model.a.allFinite() || !std::isfinite(model.r) || !std::isfinite(model.lambda) ||
        !std::isfinite(model.sigma_y2) || !std::isfinite(model.m_y))
        throw Error(Errc::invalid_argument, "model parameters must be finite");

    const double accrual = 1.0 + model.r + model.lambda;
    if (!(accrual > 0.0))
        throw Error(Errc::bad_accrual, "1 + r + lambda must be positive");

    if (!model.a.isApprox(model.a.transpose(), 1e-12))
        throw Error(Errc::not_positive_definite, "covariance A is not symmetric");
    if (model.sigma_y2 < 0.0)
        throw Error(Errc::inconsistent_covariance, "Var[Y] is negative");

    Eigen::LLT<Matrix> llt(model.a);
    if (llt.info() != Eigen::Success)
        throw Error(Errc::not_positive_definite, "Cholesky factorization of A failed");
    Matrix l = llt.matrixL();
    const double max_diag = model.a.diagonal().maxCoeff();
    const double min_pivot = l.diagonal().array().square().minCoeff();
    if (!(min_pivot >= kPivotTolerance * max_diag))
        throw Error(Errc::not_positive_definite, "smallest Cholesky pivot is below tolerance");

    auto impl = std::make_shared<ValidatedModel::Impl>();
    impl->raw = model;
    impl->accrual = accrual;
    impl->spot_accrued = model.s0 * accrual;
    impl->mu = model.m1 - impl->spot_accrued;
    impl->a_inv = llt.solve(Matrix::Identity(d, d));
    impl->a_factor = l;
    impl->ainv_mu = llt.solve(impl->mu);
    impl->ainv_b = llt.solve(model.b);
    impl->mu_ainv_mu = impl->mu.dot(impl->ainv_mu);
    impl->b_ainv_b = model.b.dot(impl->ainv_b);
    impl->b_ainv_mu = model.b.dot(impl->ainv_mu);
    impl->residual = model.sigma_y2 - impl->b_ainv_b;

    const double scale = std::max(model.sigma_y2, impl->b_ainv_b);
    if (impl->residual < -kResidualTolerance * scale)
        throw Error(Errc::inconsistent_covariance,
                    "sigma_y2 - bᵀA⁻¹b is negative: the joint covariance is not PSD");

    // Full factor [[L, 0], [cᵀ, ell]] with L c = b and ell² = sigma_y2 - |c|².
    Matrix full = Matrix::Zero(d + 1, d + 1);
    full.topLeftCorner(d, d) = l;
    const Vector c = llt.matrixL().solve(model.b);
    full.bottomLeftCorner(1, d) = c.transpose();
    full(d, d) = std::sqrt(std::max(0.0, model.sigma_y2 - c.squaredNorm()));
    impl->full_factor = std::move(full);

    return ValidatedModel(std::move(impl));
}

Vector excess_mean(const ValidatedModel& model) { return model.excess_mean(); }

EquityEvaluator::EquityEvaluator(const ValidatedModel& model, double c0, Vector theta,
                                 double q, double price)
    : model_(model), c0_(c0), theta_(std::move(theta)), q_(q), price_(price),
      dim_(model.dim()) {
    if (theta_.size() != dim_)
        throw Error(Errc::dimension_mismatch, "strategy dimension differs from the model");
    constant_ = (c0_ + price_) * model_.accrual() - theta_.dot(model_.accrued_spot());
}

double EquityEvaluator::operator()(std::span<const double> s1, double y) const {
    if (static_cast<int>(s1.size()) != dim_)
        throw Error(Errc::dimension_mismatch, "draw dimension differs from the model");
    double x = q_ * y;
    for (int i = 0; i < dim_; ++i) x += theta_[i] * (s1[i] - model_.accrued_spot()[i]);
    return x + (c0_ + price_) * model_.accrual();
}

double EquityEvaluator::mean() const {
    return q_ * model_.raw().m_y + theta_.dot(model_.excess_mean()) +
           (c0_ + price_) * model_.accrual();
}

double EquityEvaluator::stddev() const {
    const auto& m = model_.raw();
    const double var =
        theta_.dot(m.a * theta_) + 2.0 * q_ * theta_.dot(m.b) + m.sigma_y2 * q_ * q_;
    return std::sqrt(std::max(0.0, var));
}

double equity_value(const EquityEvaluator& ev, std::span<const double> s1, double y) {
    return ev(s1, y);
}

} // namespace kva
