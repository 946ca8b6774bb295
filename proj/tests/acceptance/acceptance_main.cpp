// One line per acceptance criterion. Exit status is the number of failures.
#include "kva/error.hpp"
#include "kva/linear.hpp"
#include "kva/median.hpp"
#include "kva/montecarlo.hpp"
#include "kva/oracle.hpp"
#include "kva/shareholder.hpp"

#include "support/instances.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace kva;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<test::Instance> instances_with_canon(std::uint64_t seed, int n) {
    std::vector<test::Instance> out{{test::canon_model(), test::canon_constraint()}};
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) out.push_back(test::random_instance(rng));
    return out;
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome exact_indifference() {
    double worst = 0.0;
    for (const auto& inst : instances_with_canon(101, 100)) {
        const auto vm = validate_model(inst.model);
        const double v0 = linear::linear_value(vm, inst.constraint, 0.0, 0.0);
        for (double q : test::feasible_q_grid(vm, inst.constraint)) {
            const auto sol = linear::price_exact(vm, inst.constraint, Deal{q});
            const double vq = linear::linear_value(vm, inst.constraint, q, sol.price_exact);
            worst = std::max(worst, std::abs(vq - v0) / std::abs(v0));
        }
    }
    return {worst < 1e-9, fmt("max relative gap %.3e (bound 1e-9)", worst)};
}

Outcome closed_form_vs_oracle() {
    double worst = 0.0;
    oracle::OracleConfig cfg;
    for (const auto& inst : instances_with_canon(101, 100)) {
        const auto vm = validate_model(inst.model);
        const auto& m = vm.raw();
        const Vector mu = vm.excess_mean();
        const double k = vm.accrual();
        const double c0 = inst.constraint.c0;
        auto value = [&](double q, double price) {
            auto objective = [&](const Vector& theta) {
                return q * m.m_y + theta.dot(mu) + (c0 + price) * k;
            };
            return oracle::grid_optimize(objective, vm, inst.constraint, q, cfg).value;
        };
        for (double q : test::feasible_q_grid(vm, inst.constraint)) {
            const double root = oracle::indifference_root(value, vm, q, cfg);
            const double closed = linear::price_exact(vm, inst.constraint, Deal{q}).price_exact;
            worst = std::max(worst, std::abs(root - closed));
        }
    }
    return {worst < 1e-8, fmt("max |oracle - closed form| %.3e (bound 1e-8)", worst)};
}

Outcome expansion_quality() {
    const auto vm = test::canon();
    const auto c = test::canon_constraint();
    auto err = [&](double q) {
        const auto sol = linear::price_exact(vm, c, Deal{q});
        return std::abs(sol.price_approx - sol.price_exact);
    };
    const double ratio = err(0.2) / err(0.1);
    return {ratio >= 8.0 && ratio <= 32.0, fmt("error ratio %.4f (bounds [8, 32])", ratio)};
}

Outcome linear_reduction() {
    const auto vm = test::canon();
    const CapitalConstraint c{1e4, 2.5};
    const auto batch = mc::sample(vm, 10'000'000, 42, true);
    const auto h = shareholder::default_h_grid(vm, c);
    const auto sol = shareholder::marginal_price(vm, c, batch, h);
    const auto lin = linear::expansion_coefficients(vm, c);
    const double d1 = std::abs(sol.price_coeffs.a1 - lin.a1);
    const double d2 = std::abs(sol.price_coeffs.a2 - lin.a2);
    const double tol1 = std::max(1e-3 * std::abs(lin.a1), 4.0 * sol.a1_std_error);
    const double tol2 = std::max(1e-3 * std::abs(lin.a2), 4.0 * sol.a2_std_error);
    return {d1 <= tol1 && d2 <= tol2,
            fmt("a1 %.6f vs %.6f (|d| %.2e, tol %.2e); a2 %.6f vs %.6f (|d| %.2e, tol %.2e)",
                sol.price_coeffs.a1, lin.a1, d1, tol1, sol.price_coeffs.a2, lin.a2, d2, tol2)};
}

Outcome marginal_price_property() {
    const auto vm = test::canon();
    const CapitalConstraint c{2.0, 2.5};
    const auto batch = mc::sample(vm, 10'000'000, 42, true);
    const auto h = shareholder::default_h_grid(vm, c);
    const auto sol = shareholder::marginal_price(vm, c, batch, h);
    const EquityEvaluator base(vm, c.c0, sol.theta_star, 0.0, 0.0);

    const std::vector<double> qs{0.025, 0.05, 0.1};
    std::vector<double> gap, se;
    for (double q : qs) {
        const double price = sol.price(q);
        const auto opt = shareholder::optimize_theta(vm, c, q, price, batch);
        const EquityEvaluator ev(vm, c.c0, opt.theta, q, price);
        const auto diff = mc::positive_part_difference(ev, base, batch);
        gap.push_back(std::abs(opt.value.value - sol.value.value));
        se.push_back(diff.std_error);
    }
    // Cubic constant from the two largest quantities.
    double cubic = 0.0;
    for (std::size_t i = 1; i < qs.size(); ++i)
        cubic = std::max(cubic, std::max(0.0, gap[i] - 4.0 * se[i]) / std::pow(qs[i], 3));
    bool ok = true;
    std::string detail = fmt("C %.4e;", cubic);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const double bound = 4.0 * se[i] + cubic * std::pow(qs[i], 3);
        ok = ok && gap[i] <= bound;
        detail += fmt(" q=%.3f gap %.2e bound %.2e;", qs[i], gap[i], bound);
    }
    return {ok, detail};
}

Outcome psi0_dual() {
    std::mt19937_64 rng(606);
    int failures = 0;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto inst = test::random_defaulting_instance(rng);
        const auto vm = validate_model(inst.model);
        const Vector theta = linear::optimal_theta(vm, inst.constraint, 0.0);
        const double slope = linear::expansion_coefficients(vm, inst.constraint).a1;
        const auto batch = mc::sample(vm, 2'000'000, 700 + i, true);
        const auto h = shareholder::default_h_grid(vm, inst.constraint);
        const auto est = mc::estimate_psi0(vm, inst.constraint, theta, slope, batch, h);
        const double exact = oracle::psi0_boundary_integral(vm, inst.constraint, theta, slope);
        const double z = std::abs(est.value.value - exact) / est.value.std_error;
        worst = std::max(worst, z);
        if (z > 4.0) ++failures;
    }
    return {failures == 0, fmt("%d of 20 outside 4 stderr; worst %.2f stderr", failures, worst)};
}

Outcome median_equivalence() {
    long checked = 0, mismatched = 0;
    for (const auto& inst : instances_with_canon(707, 100)) {
        const auto vm = validate_model(inst.model);
        for (double q : test::feasible_q_grid(vm, inst.constraint)) {
            const auto res = median::median_price(vm, inst.constraint, Deal{q});
            ++checked;
            if (res.price != linear::price_exact(vm, inst.constraint, Deal{q}).price_exact)
                ++mismatched;
        }
    }
    const auto vm = test::canon();
    const auto c = test::canon_constraint();
    // Plain draws: antithetic pairs pin the sample median of an affine X to its mean.
    const auto batch = mc::sample(vm, 1'000'000, 42, false);
    const auto deal = median::median_price(vm, c, Deal{0.1});
    const EquityEvaluator ev0(vm, c.c0, linear::optimal_theta(vm, c, 0.0), 0.0, 0.0);
    const EquityEvaluator evq(vm, c.c0, deal.delegate.theta_star, 0.1, deal.price);
    const auto m0 = median::positive_part_median(ev0, batch);
    const auto mq = median::positive_part_median(evq, batch);
    const double z = std::abs(mq.value - m0.value) / std::hypot(m0.std_error, mq.std_error);
    return {mismatched == 0 && z <= 4.0,
            fmt("%ld/%ld prices bit-equal; MC medians %.6f vs %.6f (%.2f quantile stderr)",
                checked - mismatched, checked, mq.value, m0.value, z)};
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome cli_determinism() {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "kva_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = std::string(KVA_CLI_EXE) + " price " +
                             test::fixture_path("canon.json") +
                             " --mode shareholder --paths 1000000 --seed 11 --deterministic";
    std::string outs[2];
    for (int i = 0; i < 2; ++i) {
        outs[i] = (dir / ("run" + std::to_string(i) + ".json")).string();
        const std::string cmd = base + " --out " + outs[i] + " --csv " + outs[i] + ".csv";
        if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
    }
    const std::string a = slurp(outs[0]), b = slurp(outs[1]);
    const bool same = !a.empty() && a == b && slurp(outs[0] + ".csv") == slurp(outs[1] + ".csv");
    fs::remove_all(dir);
    return {same, fmt("reports of %zu bytes %s", a.size(), same ? "identical" : "differ")};
}

Outcome raroc_identity() {
    double worst = 0.0;
    std::mt19937_64 rng(909);
    for (int i = 0; i < 100; ++i) {
        const auto inst = test::random_instance(rng);
        const auto vm = validate_model(inst.model);
        const auto& m = vm.raw();
        const double c0 = inst.constraint.c0;
        const auto r = linear::raroc_report(vm, inst.constraint);
        const double h = std::sqrt(vm.mu_ainv_mu()) / inst.constraint.nu + m.r + m.lambda;
        const double v0 = linear::linear_value(vm, inst.constraint, 0.0, 0.0);
        worst = std::max({worst, std::abs(r.hurdle - h) / std::abs(h),
                          std::abs(r.expected_pnl - c0 * h) / std::abs(c0 * h),
                          std::abs(r.expected_pnl - (v0 - c0)) / std::abs(c0 * h)});
    }
    return {worst <= 1e-12, fmt("max relative deviation %.3e (bound 1e-12)", worst)};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_seconds;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {"exact indifference of the closed-form price", 1, exact_indifference},
        {"closed form matches oracle bisection", 30, closed_form_vs_oracle},
        {"small-q expansion error ratio", 1, expansion_quality},
        {"shareholder coefficients reduce to linear at large capital", 300, linear_reduction},
        {"marginal price keeps shareholder value to third order", 600, marginal_price_property},
        {"psi(0) estimator matches boundary integral", 300, psi0_dual},
        {"median price equals linear price", 60, median_equivalence},
        {"deterministic CLI reports", 60, cli_determinism},
        {"RAROC identities", 1, raroc_identity},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failures;
        std::printf("%s criterion %zu: %s | %s | %.2f s (budget %.0f s%s)\n",
                    pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(), secs,
                    c.budget_seconds, in_time ? "" : ", exceeded");
        std::fflush(stdout);
    }
    return failures;
}
