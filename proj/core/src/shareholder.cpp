#include "kva/shareholder.hpp"

#include "kva/error.hpp"
#include "kva/gaussian.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace kva::shareholder {
namespace {

constexpr double kIdentityTolerance = 1e-3;

void check_batch(const ValidatedModel& model, const mc::SampleBatch& batch) {
    if (model.dim() != batch.dim())
        throw Error(Errc::dimension_mismatch, "model and batch dimensions differ");
}

// theta = center + radius L⁻ᵀ u on the unit sphere.
struct Ellipsoid {
    Vector center;
    double radius = 0.0;
    const Matrix* l = nullptr;

    Vector theta(const Vector& u) const {
        return center + radius * l->transpose().triangularView<Eigen::Upper>().solve(u);
    }
    Vector gradient_u(const Vector& grad_theta) const {
        return radius * l->triangularView<Eigen::Lower>().solve(grad_theta);
    }
};

Ellipsoid make_ellipsoid(const ValidatedModel& model, const CapitalConstraint& constraint,
                         double q) {
    const double c = constraint.c0 / constraint.nu;
    const double r2 = c * c - q * q * model.residual_variance();
    if (!(r2 >= 0.0))
        throw Error(Errc::infeasible, "no strategy meets the capital constraint at q = " +
                                          std::to_string(q));
    Ellipsoid e;
    e.center = -q * model.ainv_b();
    e.radius = std::sqrt(r2);
    e.l = &model.a_factor();
    return e;
}

struct Point {
    Vector u;
    ObjectivePair::Evaluation eval;
};

struct StartResult {
    Point point;
    double stationarity = 0.0;
    int iterations = 0;
    bool converged = false;
};

StartResult climb(const ObjectivePair& obj, const Ellipsoid& e, double q, double price,
                  Vector u0, const OptimizerOptions& options) {
    auto at = [&](Vector u) {
        Point p;
        p.eval = obj.evaluate(e.theta(u), q, price);
        p.u = std::move(u);
        return p;
    };
    StartResult out;
    out.point = at(std::move(u0));
    for (int it = 0;; ++it) {
        out.iterations = it;
        const Point& p = out.point;
        const Vector g = e.gradient_u(p.eval.gradient);
        const double gn = g.norm();
        if (gn == 0.0) {
            // Every row defaults: f is flat.
            out.stationarity = 0.0;
            out.converged = true;
            return out;
        }
        const Vector proj = g - g.dot(p.u) * p.u;
        out.stationarity = proj.norm() / gn;
        if (out.stationarity <= options.tolerance) {
            out.converged = true;
            return out;
        }
        if (it >= options.max_iterations) return out;

        // f is convex, so the power step u = g/|g| never decreases it.
        Point cand = at(g / gn);
        bool moved = cand.eval.value > p.eval.value;
        for (double step = 1.0; !moved && step > 1e-12; step *= 0.5) {
            cand = at((p.u + step * proj / gn).normalized());
            moved = cand.eval.value > p.eval.value;
        }
        if (!moved) {
            out.converged = out.stationarity <= options.nonsmooth_tolerance;
            return out;
        }
        out.point = std::move(cand);
    }
}

// Relative to ref; `scale` stands in when ref is exactly zero.
double relative_gap(double x, double ref, double scale) {
    const double denom = ref != 0.0 ? std::abs(ref) : scale;
    if (denom == 0.0) return std::abs(x - ref);
    return std::abs(x - ref) / denom;
}

} // namespace

double scaling_factor(ConstraintScaling scaling, const CapitalConstraint& constraint) {
    return scaling == ConstraintScaling::unit ? 1.0 : constraint.nu * constraint.nu;
}

ObjectivePair::ObjectivePair(const ValidatedModel& model, const CapitalConstraint& constraint,
                             const mc::SampleBatch& batch, ConstraintScaling scaling,
                             unsigned workers)
    : model_(model), constraint_(constraint), batch_(&batch), scaling_(scaling),
      kappa_(scaling_factor(scaling, constraint)), workers_(workers) {
    constraint.validate();
    check_batch(model, batch);
}

ObjectivePair::Evaluation ObjectivePair::evaluate(const Vector& theta, double q,
                                                  double price) const {
    const EquityEvaluator ev(model_, constraint_.c0, theta, q, price);
    const int d = model_.dim();
    const auto& batch = *batch_;
    const std::size_t chunks = batch.chunk_count();

    struct Partial {
        double positive = 0.0;
        double alive = 0.0;
        Vector s1;
    };
    std::vector<Partial> partial(chunks);
    mc::detail::for_each_chunk(chunks, workers_, [&](std::size_t c) {
        Partial& acc = partial[c];
        acc.s1 = Vector::Zero(d);
        const std::size_t end = std::min(batch.size(), (c + 1) * mc::kChunkRows);
        for (std::size_t i = c * mc::kChunkRows; i < end; ++i) {
            const double* row = batch.row(i);
            const double x = ev.on_row(row);
            if (x > 0.0) {
                acc.positive += x;
                acc.alive += 1.0;
                for (int k = 0; k < d; ++k) acc.s1[k] += row[k];
            }
        }
    });

    double positive = 0.0;
    double alive = 0.0;
    Vector s1 = Vector::Zero(d);
    for (const auto& p : partial) {
        positive += p.positive;
        alive += p.alive;
        s1 += p.s1;
    }
    const double n = static_cast<double>(batch.size());
    Evaluation out;
    out.value = positive / n;
    out.survival = alive / n;
    out.gradient = (s1 - alive * model_.accrued_spot()) / n;
    return out;
}

mc::Estimate ObjectivePair::f(const Vector& theta, double q, double price) const {
    const EquityEvaluator ev(model_, constraint_.c0, theta, q, price);
    return mc::positive_part_value(ev, *batch_, workers_);
}

double ObjectivePair::g(const Vector& theta, double q) const {
    const auto& m = model_.raw();
    return kappa_ * (theta.dot(m.a * theta) + 2.0 * q * theta.dot(m.b) + m.sigma_y2 * q * q);
}

Vector ObjectivePair::g_theta(const Vector& theta, double q) const {
    const auto& m = model_.raw();
    return 2.0 * kappa_ * (m.a * theta + q * m.b);
}

double ObjectivePair::g_q(const Vector& theta, double q) const {
    const auto& m = model_.raw();
    return 2.0 * kappa_ * (m.sigma_y2 * q + m.b.dot(theta));
}

double ObjectivePair::g_qq() const { return 2.0 * kappa_ * model_.raw().sigma_y2; }

Matrix ObjectivePair::g_theta_theta() const { return 2.0 * kappa_ * model_.raw().a; }

double ObjectivePair::target() const {
    const double c = constraint_.c0 / constraint_.nu;
    return kappa_ * c * c;
}

ThetaOptimum optimize_theta(const ValidatedModel& model, const CapitalConstraint& constraint,
                            double q, double price, const mc::SampleBatch& batch,
                            const OptimizerOptions& options) {
    const ObjectivePair obj(model, constraint, batch, ConstraintScaling::unit, options.workers);
    const Ellipsoid e = make_ellipsoid(model, constraint, q);
    const int d = model.dim();

    ThetaOptimum best;
    auto finish = [&](const Vector& theta, double stationarity, int iterations, int starts) {
        best.theta = theta;
        best.value = obj.f(theta, q, price);
        best.stationarity = stationarity;
        best.iterations = iterations;
        best.converged_starts = starts;
        return best;
    };

    if (e.radius == 0.0) return finish(e.center, 0.0, 0, 1);

    if (d == 1) {
        const Vector up = Vector::Constant(1, 1.0);
        const Vector down = Vector::Constant(1, -1.0);
        const double fu = obj.evaluate(e.theta(up), q, price).value;
        const double fd = obj.evaluate(e.theta(down), q, price).value;
        return finish(e.theta(fd > fu ? down : up), 0.0, 0, 2);
    }

    std::vector<Vector> starts;
    if (options.warm_start_linear) {
        const Vector w = model.a_factor().triangularView<Eigen::Lower>().solve(
            model.excess_mean());
        if (w.norm() > 0.0) starts.push_back(w.normalized());
    }
    std::mt19937_64 engine(options.seed);
    std::normal_distribution<double> normal;
    for (int s = 0; s < options.restarts; ++s) {
        Vector u(d);
        do {
            for (int k = 0; k < d; ++k) u[k] = normal(engine);
        } while (u.norm() == 0.0);
        starts.push_back(u.normalized());
    }
    if (starts.empty())
        throw Error(Errc::invalid_argument, "optimizer needs at least one start");

    std::optional<StartResult> top;
    int converged = 0;
    double worst_stationarity = 0.0;
    for (auto& u0 : starts) {
        StartResult r = climb(obj, e, q, price, std::move(u0), options);
        if (!r.converged) {
            worst_stationarity = std::max(worst_stationarity, r.stationarity);
            continue;
        }
        ++converged;
        if (!top || r.point.eval.value > top->point.eval.value) top = std::move(r);
    }
    if (!top)
        throw Error(Errc::max_iterations,
                    "no optimizer start reached stationarity (projected gradient ratio " +
                        std::to_string(worst_stationarity) + ")");
    return finish(e.theta(top->point.u), top->stationarity, top->iterations, converged);
}

mc::Estimate multiplier_numeric(const ValidatedModel& model, const CapitalConstraint& constraint,
                                double q, double price, const Vector& theta_star,
                                const mc::SampleBatch& batch, ConstraintScaling scaling,
                                unsigned workers) {
    const ObjectivePair obj(model, constraint, batch, scaling, workers);
    const Vector grad_g = obj.g_theta(theta_star, q);
    const double gg = grad_g.squaredNorm();
    if (!(gg > 0.0))
        throw Error(Errc::zero_gradient, "constraint gradient vanishes at theta*");
    const Vector w = grad_g / gg;
    const double offset = w.dot(model.accrued_spot());
    const EquityEvaluator ev(model, constraint.c0, theta_star, q, price);
    const int d = model.dim();
    return mc::estimate_mean(
        batch,
        [&](const double* row) {
            if (!(ev.on_row(row) > 0.0)) return 0.0;
            double s = -offset;
            for (int k = 0; k < d; ++k) s += w[k] * row[k];
            return s;
        },
        workers);
}

ThetaDerivative theta_derivative(const ValidatedModel& model, const CapitalConstraint& constraint,
                                 double q0, const Vector& theta_at_q0,
                                 const std::function<double(double)>& price_fn,
                                 const mc::SampleBatch& batch, double dq,
                                 const OptimizerOptions& options) {
    if (!(dq > 0.0) || !std::isfinite(dq))
        throw Error(Errc::invalid_argument, "dq must be positive");
    ThetaDerivative out;
    out.dq = dq;
    out.plus = optimize_theta(model, constraint, q0 + dq, price_fn(q0 + dq), batch, options);
    out.minus = optimize_theta(model, constraint, q0 - dq, price_fn(q0 - dq), batch, options);
    out.value = (out.plus.theta - out.minus.theta) / (2.0 * dq);

    // g(theta*(q), q) is constant, so dg/dq + grad g . theta' = 0.
    const ObjectivePair obj(model, constraint, batch, ConstraintScaling::unit, options.workers);
    const double gq = obj.g_q(theta_at_q0, q0);
    const Vector grad = obj.g_theta(theta_at_q0, q0);
    const double along = grad.dot(out.value);
    const double scale = std::abs(gq) + grad.norm() * out.value.norm();
    out.identity_residual = scale > 0.0 ? std::abs(gq + along) / scale : 0.0;
    if (out.identity_residual > kIdentityTolerance)
        throw Error(Errc::constraint_identity_violated,
                    "dg/dq + grad g . theta' has relative size " +
                        std::to_string(out.identity_residual) + " at dq = " +
                        std::to_string(dq));
    return out;
}

Matrix boundary_hessian(const ValidatedModel& model, double c0, const Vector& theta, double q,
                        double price) {
    const EquityEvaluator ev(model, c0, theta, q, price);
    const auto& m = model.raw();
    const int d = model.dim();
    const double s = ev.stddev();
    if (!(s > 0.0)) return Matrix::Zero(d, d);
    const double mean = ev.mean();
    const double s2 = s * s;
    const Vector c = m.a * theta + q * m.b; // Cov[S1, X]
    const Vector cond_mean = model.excess_mean() - c * (mean / s2);
    const Matrix cond_cov = m.a - c * c.transpose() / s2;
    const double density = normal_pdf(mean / s) / s;
    return density * (cond_cov + cond_mean * cond_mean.transpose());
}

double contract_curvature(const Matrix& g_hessian, const Matrix& f_hessian,
                          const Vector& theta_prime, double chi) {
    return theta_prime.dot((chi * g_hessian - f_hessian) * theta_prime);
}

double curvature_term(const ValidatedModel& model, const CapitalConstraint& constraint,
                      const Vector& theta_star, const Vector& theta_prime, double chi0,
                      ConstraintScaling scaling) {
    constraint.validate();
    const double kappa = scaling_factor(scaling, constraint);
    const Matrix g_hess = 2.0 * kappa * model.raw().a;
    const Matrix f_hess = boundary_hessian(model, constraint.c0, theta_star, 0.0, 0.0);
    return contract_curvature(g_hess, f_hess, theta_prime, chi0);
}

linear::ExpansionCoefficients assemble_price_coefficients(const PriceComponents& c) {
    if (!(c.survival > 0.0))
        throw Error(Errc::degenerate_distribution, "the bank defaults on every path");
    linear::ExpansionCoefficients out;
    out.a1 = (-c.survival_y + c.chi0 * c.g_q) / (c.survival * c.accrual);
    out.a2 = (-c.psi0 + 2.0 * c.chi0_prime * c.g_q + c.chi0 * c.g_qq - c.curvature) /
             (2.0 * c.accrual * c.survival);
    return out;
}

double ShareholderSolution::price_std_error(double q) const noexcept {
    const double v = q * q * a1_std_error * a1_std_error +
                     q * q * q * q * a2_std_error * a2_std_error +
                     2.0 * q * q * q * a1_a2_covariance;
    return std::sqrt(std::max(0.0, v));
}

double default_dq(const ValidatedModel& model, const CapitalConstraint& constraint) {
    const double sy = model.sigma_y();
    return sy > 0.0 ? 0.01 * (constraint.c0 / constraint.nu) / sy : 0.01;
}

std::vector<double> default_h_grid(const ValidatedModel& model,
                                   const CapitalConstraint& constraint) {
    const double sy = model.sigma_y();
    const double base = sy > 0.0 ? (constraint.c0 / constraint.nu) / sy : 1.0;
    return {0.1 * base, 0.05 * base, 0.025 * base};
}

ShareholderSolution marginal_price(const ValidatedModel& model,
                                   const CapitalConstraint& constraint,
                                   const mc::SampleBatch& batch, std::span<const double> h_grid,
                                   const MarginalPriceOptions& options) {
    const unsigned workers = options.optimizer.workers;
    const ObjectivePair obj(model, constraint, batch, options.scaling, workers);
    const int d = model.dim();
    const double k = model.accrual();

    ShareholderSolution sol;
    sol.scaling = options.scaling;
    sol.kappa = obj.kappa();

    const ThetaOptimum opt0 = optimize_theta(model, constraint, 0.0, 0.0, batch, options.optimizer);
    sol.theta_star = opt0.theta;
    sol.value = opt0.value;
    sol.stationarity = opt0.stationarity;

    const EquityEvaluator ev0(model, constraint.c0, sol.theta_star, 0.0, 0.0);
    auto first = mc::row_moments(
        batch, 2,
        [&](const double* row, double* out) {
            const bool alive = ev0.on_row(row) > 0.0;
            out[0] = alive ? 1.0 : 0.0;
            out[1] = alive ? row[d] : 0.0;
        },
        workers);
    sol.survival = first[0].estimate();
    const double survival_y = first[1].mean;
    if (!(sol.survival.value > 0.0))
        throw Error(Errc::degenerate_distribution, "the bank defaults on every path");

    const mc::Estimate chi0 = multiplier_numeric(model, constraint, 0.0, 0.0, sol.theta_star,
                                                 batch, options.scaling, workers);
    sol.chi0 = chi0.value;

    PriceComponents comp;
    comp.survival = sol.survival.value;
    comp.survival_y = survival_y;
    comp.chi0 = sol.chi0;
    comp.g_q = obj.g_q(sol.theta_star, 0.0);
    comp.g_qq = obj.g_qq();
    comp.accrual = k;
    const double a1 = assemble_price_coefficients(comp).a1;

    // theta'(0) with the price following its first-order term.
    const auto price_fn = [a1](double q) { return a1 * q; };
    double dq = options.dq.value_or(default_dq(model, constraint));
    std::optional<ThetaDerivative> deriv;
    for (int attempt = 0;; ++attempt) {
        try {
            deriv = theta_derivative(model, constraint, 0.0, sol.theta_star, price_fn, batch, dq,
                                     options.optimizer);
            break;
        } catch (const Error& e) {
            if (e.code() != Errc::constraint_identity_violated ||
                attempt >= options.max_dq_halvings)
                throw;
            dq *= 0.5;
        }
    }
    sol.dq = dq;
    sol.theta_prime = deriv->value;

    const Vector& theta_p = deriv->plus.theta;
    const Vector& theta_m = deriv->minus.theta;
    const mc::Estimate chi_p = multiplier_numeric(model, constraint, dq, a1 * dq, theta_p, batch,
                                                  options.scaling, workers);
    const mc::Estimate chi_m = multiplier_numeric(model, constraint, -dq, -a1 * dq, theta_m,
                                                  batch, options.scaling, workers);
    sol.chi0_prime = (chi_p.value - chi_m.value) / (2.0 * dq);

    const Matrix g_hess = obj.g_theta_theta();
    sol.curvature =
        curvature_term(model, constraint, sol.theta_star, sol.theta_prime, sol.chi0,
                       options.scaling);
    sol.psi0 = mc::estimate_psi0(model, constraint, sol.theta_star, a1, batch, h_grid, workers);

    comp.chi0_prime = sol.chi0_prime;
    comp.psi0 = sol.psi0.value.value;
    comp.curvature = sol.curvature;
    sol.components = comp;
    sol.price_coeffs = assemble_price_coefficients(comp);

    // Delta-method standard errors from per-row influence functions.
    const EquityEvaluator evp(model, constraint.c0, theta_p, dq, a1 * dq);
    const EquityEvaluator evm(model, constraint.c0, theta_m, -dq, -a1 * dq);
    auto weights = [&](const Vector& theta, double q) {
        const Vector g = obj.g_theta(theta, q);
        return Vector(g / g.squaredNorm());
    };
    const Vector w0 = weights(sol.theta_star, 0.0);
    const Vector wp = weights(theta_p, dq);
    const Vector wm = weights(theta_m, -dq);
    const Vector& spot = model.accrued_spot();
    const mc::Psi0Kernel kernel(model, constraint.c0, sol.theta_star, a1,
                                std::vector<double>(h_grid.begin(), h_grid.end()));
    const double phi = comp.survival;
    const double a2 = sol.price_coeffs.a2;
    const double g_q = comp.g_q;
    const double quad = comp.g_qq - sol.theta_prime.dot(g_hess * sol.theta_prime);

    auto influence = mc::row_moments(
        batch, 3,
        [&](const double* row, double* out) {
            auto proj = [&](const Vector& w) {
                double s = 0.0;
                for (int i = 0; i < d; ++i) s += w[i] * (row[i] - spot[i]);
                return s;
            };
            const double alive = ev0.on_row(row) > 0.0 ? 1.0 : 0.0;
            const double chi_i = alive * proj(w0);
            const double chi_pi = evp.on_row(row) > 0.0 ? proj(wp) : 0.0;
            const double chi_mi = evm.on_row(row) > 0.0 ? proj(wm) : 0.0;
            const double dchi_i = (chi_pi - chi_mi) / (2.0 * dq);
            const double y = row[d];

            const double i1 = ((-alive * y + chi_i * g_q) - a1 * k * alive) / (phi * k);
            const double n2 = -kernel(row) + 2.0 * dchi_i * g_q + chi_i * quad;
            const double i2 = n2 / (2.0 * k * phi) - a2 * alive / phi;
            out[0] = i1;
            out[1] = i2;
            out[2] = i1 + i2;
        },
        workers);
    const double n = static_cast<double>(batch.size());
    auto var = [&](const mc::Moments& m) { return m.m2 / (n - 1.0) / n; };
    const double v1 = var(influence[0]);
    const double v2 = var(influence[1]);
    sol.a1_std_error = std::sqrt(v1);
    sol.a2_std_error = std::sqrt(v2);
    sol.a1_a2_covariance = 0.5 * (var(influence[2]) - v1 - v2);
    return sol;
}

LinearReductionReport compare_with_linear(const ValidatedModel& model,
                                          const CapitalConstraint& constraint,
                                          const ShareholderSolution& solution) {
    const auto& m = model.raw();
    LinearReductionReport r;
    r.linear_coeffs = linear::expansion_coefficients(model, constraint);
    r.shareholder_coeffs = solution.price_coeffs;

    const double chi_l = linear::multiplier(model, constraint, 0.0);
    const Vector theta_l = linear::optimal_theta(model, constraint, 0.0);
    const double q_scale = default_dq(model, constraint) / 0.01;
    const double k = model.accrual();

    r.chi0 = relative_gap(solution.chi0_linear_units(), chi_l, 0.0);
    r.chi0_prime = std::abs(solution.chi0_prime_linear_units()) * q_scale / chi_l;
    r.theta = (solution.theta_star - theta_l).norm() / theta_l.norm();

    const double curvature_l = 2.0 * chi_l * model.b_ainv_b();
    r.curvature = relative_gap(solution.curvature, curvature_l,
                               2.0 * chi_l * std::max(model.b_ainv_b(), m.sigma_y2));
    r.a1 = relative_gap(solution.price_coeffs.a1, r.linear_coeffs.a1,
                        (std::abs(m.m_y) + std::abs(model.b_ainv_mu())) / k);
    r.a2 = relative_gap(solution.price_coeffs.a2, r.linear_coeffs.a2,
                        chi_l * m.sigma_y2 / k);
    r.default_probability = 1.0 - solution.survival.value;
    return r;
}

LinearReductionReport linear_reduction_check(const ValidatedModel& model,
                                             const CapitalConstraint& constraint,
                                             const mc::SampleBatch& batch,
                                             std::span<const double> h_grid,
                                             const MarginalPriceOptions& options) {
    const ShareholderSolution sol = marginal_price(model, constraint, batch, h_grid, options);
    return compare_with_linear(model, constraint, sol);
}

LinearReductionReport linear_reduction_bypass(const ValidatedModel& model,
                                              const CapitalConstraint& constraint,
                                              ConstraintScaling scaling) {
    constraint.validate();
    const auto& m = model.raw();
    const double kappa = scaling_factor(scaling, constraint);

    ShareholderSolution sol;
    sol.scaling = scaling;
    sol.kappa = kappa;
    sol.theta_star = linear::optimal_theta(model, constraint, 0.0);
    sol.chi0 = linear::multiplier(model, constraint, 0.0) / kappa;
    sol.chi0_prime = 0.0;
    sol.theta_prime = -model.ainv_b();
    sol.survival = {1.0, 0.0, 0};

    const Matrix g_hess = 2.0 * kappa * m.a;
    sol.curvature = contract_curvature(g_hess, Matrix::Zero(m.dim(), m.dim()), sol.theta_prime,
                                       sol.chi0);

    PriceComponents comp;
    comp.survival = 1.0;
    comp.survival_y = m.m_y;
    comp.chi0 = sol.chi0;
    comp.chi0_prime = 0.0;
    comp.g_q = 2.0 * kappa * m.b.dot(sol.theta_star);
    comp.g_qq = 2.0 * kappa * m.sigma_y2;
    comp.psi0 = 0.0;
    comp.curvature = sol.curvature;
    comp.accrual = model.accrual();
    sol.components = comp;
    sol.price_coeffs = assemble_price_coefficients(comp);
    return compare_with_linear(model, constraint, sol);
}

} // namespace kva::shareholder
