#include "kva/oracle.hpp"

#include "kva/error.hpp"
#include "kva/gaussian.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace kva::oracle {
namespace {

// Theta(q) = {centre + map u : |u| = 1}.
struct SphereMap {
    Vector centre;
    Matrix map;
};

SphereMap sphere_map(const ValidatedModel& model, const CapitalConstraint& constraint, double q) {
    const auto& m = model.raw();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.a);
    if (eig.info() != Eigen::Success)
        throw Error(Errc::infeasible, "eigendecomposition of A failed");
    const Vector& lam = eig.eigenvalues();
    const Matrix& v = eig.eigenvectors();

    // Complete the square: thetaᵀAθ + 2q thetaᵀb = (theta - c)ᵀA(theta - c) - q² bᵀA⁻¹b.
    const Vector coords = v.transpose() * m.b;
    const Vector centre = -q * (v * coords.cwiseQuotient(lam));
    const double bab = coords.cwiseAbs2().cwiseQuotient(lam).sum();
    const double c = constraint.c0 / constraint.nu;
    const double r2 = c * c - q * q * (m.sigma_y2 - bab);
    if (!(r2 >= 0.0))
        throw Error(Errc::infeasible,
                    "InfeasibleConstraint: empty constraint set at q = " + std::to_string(q));
    SphereMap s;
    s.centre = centre;
    s.map = std::sqrt(r2) * v * lam.cwiseSqrt().cwiseInverse().asDiagonal();
    return s;
}

// Unit directions as columns.
Matrix directions(int d, int count, std::uint64_t seed) {
    if (d == 1) {
        Matrix out(1, 2);
        out << 1.0, -1.0;
        return out;
    }
    Matrix out(d, count);
    if (d == 2) {
        for (int k = 0; k < count; ++k) {
            const double a = 2.0 * std::numbers::pi * k / count;
            out(0, k) = std::cos(a);
            out(1, k) = std::sin(a);
        }
        return out;
    }
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    Vector u(d);
    for (int col = 0; col < count;) {
        for (int k = 0; k < d; ++k) u[k] = normal(engine);
        const double len = u.norm();
        if (len > 0.0) out.col(col++) = u / len;
    }
    return out;
}

// Bisection calls the optimizer many times with the same grid.
const Matrix& cached_directions(int d, int count, std::uint64_t seed) {
    struct Entry {
        int d = -1;
        int count = -1;
        std::uint64_t seed = 0;
        Matrix grid;
    };
    thread_local Entry last;
    if (last.d != d || last.count != count || last.seed != seed) {
        last.grid = directions(d, count, seed);
        last.d = d;
        last.count = count;
        last.seed = seed;
    }
    return last.grid;
}

} // namespace

GridResult grid_optimize(const Objective& objective, const ValidatedModel& model,
                         const CapitalConstraint& constraint, double q,
                         const OracleConfig& config) {
    constraint.validate();
    if (config.sphere_grid_count < 1)
        throw Error(Errc::invalid_argument, "sphere_grid_count must be positive");
    const SphereMap s = sphere_map(model, constraint, q);
    const int d = model.dim();
    auto theta_of = [&](const Vector& u) { return Vector(s.centre + s.map * u); };

    const Matrix& grid = cached_directions(d, config.sphere_grid_count, config.seed);
    const Matrix thetas = (s.map * grid).colwise() + s.centre;
    Eigen::Index best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    Vector theta(d);
    for (Eigen::Index i = 0; i < thetas.cols(); ++i) {
        theta = thetas.col(i);
        const double v = objective(theta);
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }

    GridResult out;
    out.grid_value = best_value;
    Vector u = grid.col(best);
    double value = best_value;

    if (d > 1) {
        // Compass search on the sphere, starting near the grid spacing.
        double step = d == 2 ? 2.0 * std::numbers::pi / config.sphere_grid_count
                             : std::pow(static_cast<double>(config.sphere_grid_count),
                                        -1.0 / (d - 1));
        for (int it = 0; it < config.refine_iterations && step > 1e-13; ++it) {
            bool improved = false;
            for (int k = 0; k < d; ++k) {
                for (double sign : {1.0, -1.0}) {
                    Vector trial = u;
                    trial[k] += sign * step;
                    trial.normalize();
                    const double v = objective(theta_of(trial));
                    if (v > value) {
                        value = v;
                        u = trial;
                        improved = true;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
    }
    out.theta = theta_of(u);
    out.value = value;
    return out;
}

std::pair<double, double> default_bracket(const ValidatedModel& model, double q) {
    double w = 10.0 * std::abs(q) * (std::abs(model.raw().m_y) + model.sigma_y());
    if (!(w > 0.0)) w = 1.0;
    return {-w, w};
}

double indifference_root(const ValueFunction& value_fn, const ValidatedModel& model, double q,
                         const OracleConfig& config) {
    if (q == 0.0) return 0.0;
    if (!(config.bisect_tol > 0.0))
        throw Error(Errc::invalid_argument, "bisect_tol must be positive");
    const double target = value_fn(0.0, 0.0);
    auto gap = [&](double p) { return value_fn(q, p) - target; };

    double lo = 0.0;
    double hi = 0.0;
    double f_lo = 0.0;
    double f_hi = 0.0;
    if (config.bracket) {
        std::tie(lo, hi) = *config.bracket;
        if (!(lo < hi))
            throw Error(Errc::bracket_invalid, "bracket must satisfy lo < hi");
        f_lo = gap(lo);
        f_hi = gap(hi);
        if (!(f_lo <= 0.0 && f_hi >= 0.0))
            throw Error(Errc::bracket_invalid, "bracket does not straddle the indifference price");
    } else {
        auto [l, h] = default_bracket(model, q);
        lo = l;
        hi = h;
        f_lo = gap(lo);
        f_hi = gap(hi);
        for (int k = 0; !(f_lo <= 0.0 && f_hi >= 0.0); ++k) {
            if (k >= config.max_doublings)
                throw Error(Errc::bracket_invalid,
                            "no straddling bracket after " + std::to_string(k) + " doublings");
            lo *= 2.0;
            hi *= 2.0;
            f_lo = gap(lo);
            f_hi = gap(hi);
        }
    }
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;

    for (int it = 0; it < config.max_iterations; ++it) {
        if (hi - lo <= config.bisect_tol) return 0.5 * (lo + hi);
        const double mid = 0.5 * (lo + hi);
        const double f = gap(mid);
        if (f == 0.0) return mid;
        (f < 0.0 ? lo : hi) = mid;
    }
    if (hi - lo <= config.bisect_tol) return 0.5 * (lo + hi);
    throw Error(Errc::tolerance_not_reached,
                "bisection stopped with bracket width " + std::to_string(hi - lo));
}

double psi0_boundary_integral(const ValidatedModel& model, const CapitalConstraint& constraint,
                              const Vector& theta_star, double price_slope) {
    constraint.validate();
    const auto& m = model.raw();
    if (theta_star.size() != model.dim())
        throw Error(Errc::dimension_mismatch, "strategy dimension differs from the model");
    const double k = 1.0 + m.r + m.lambda;
    const Vector mu = m.m1 - m.s0 * k;
    const double mean_x = theta_star.dot(mu) + constraint.c0 * k;
    const double var_x = theta_star.dot(m.a * theta_star);
    if (!(var_x > 0.0))
        throw Error(Errc::degenerate_variance, "X has zero variance");
    const double cov_wx = m.b.dot(theta_star);
    const double mean_w = m.m_y + price_slope * k - cov_wx * mean_x / var_x;
    const double var_w = std::max(0.0, m.sigma_y2 - cov_wx * cov_wx / var_x);
    const double sd_x = std::sqrt(var_x);
    return normal_pdf(mean_x / sd_x) / sd_x * (var_w + mean_w * mean_w);
}

} // namespace kva::oracle
