#include "kva/cli/run.hpp"

#include "kva/error.hpp"
#include "kva/gaussian.hpp"
#include "kva/linear.hpp"
#include "kva/median.hpp"
#include "kva/montecarlo.hpp"
#include "kva/oracle.hpp"
#include "kva/shareholder.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef KVA_VERSION_STRING
#define KVA_VERSION_STRING "0.0.0"
#endif

namespace kva::cli {
namespace {

using nlohmann::json;

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json decomposition_json(double expectation, double capital, double hedge, double accrual) {
    return {{"expectation_term", expectation},
            {"capital_term", capital},
            {"hedge_term", hedge},
            {"accrual", accrual}};
}

json linear_decomposition(const linear::PriceDecomposition& d) {
    return decomposition_json(d.expectation, d.capital, d.hedge, d.accrual);
}

// Closed-form P[X > 0] for Gaussian X.
double gaussian_survival(const EquityEvaluator& ev) {
    const double s = ev.stddev();
    if (s == 0.0) return ev.mean() > 0.0 ? 1.0 : 0.0;
    return normal_cdf(ev.mean() / s);
}

json linear_row(const Scenario& s, const ValidatedModel& model, double q) {
    const auto sol = linear::price_exact(model, s.constraint, Deal{q});
    const EquityEvaluator ev(model, s.constraint.c0, sol.theta_star, q, sol.price_exact);
    return {{"q", q},
            {"price", sol.price_exact},
            {"price_approx", sol.price_approx},
            {"decomposition", linear_decomposition(sol.decomposition)},
            {"chi_q", sol.chi_q},
            {"theta_star", vec(sol.theta_star)},
            {"v_tilde", sol.v_tilde},
            {"survival_prob", gaussian_survival(ev)},
            {"stderr", 0.0}};
}

json raroc_json(const ValidatedModel& model, const CapitalConstraint& c) {
    const auto r = linear::raroc_report(model, c);
    return {{"raroc0", r.raroc0}, {"hurdle", r.hurdle}, {"expected_pnl", r.expected_pnl}};
}

json estimate_json(const mc::Estimate& e) {
    return {{"value", e.value}, {"stderr", e.std_error}, {"n", e.n}};
}

void linear_report(json& report, const Scenario& s, const ValidatedModel& model) {
    json rows = json::array();
    for (double q : s.quantities()) rows.push_back(linear_row(s, model, q));
    const auto coeffs = linear::expansion_coefficients(model, s.constraint);
    report["results"] = rows;
    report["chi_0"] = linear::multiplier(model, s.constraint, 0.0);
    report["theta_star_0"] = vec(linear::optimal_theta(model, s.constraint, 0.0));
    report["expansion"] = {{"a1", coeffs.a1}, {"a2", coeffs.a2}};
}

void median_report(json& report, const Scenario& s, const ValidatedModel& model) {
    json rows = json::array();
    for (double q : s.quantities()) {
        const auto res = median::median_price(model, s.constraint, Deal{q});
        const auto& sol = res.delegate;
        const EquityEvaluator ev(model, s.constraint.c0, sol.theta_star, q, res.price);
        rows.push_back({{"q", q},
                        {"price", res.price},
                        {"solvency_ok", res.solvency_ok},
                        {"decomposition", linear_decomposition(sol.decomposition)},
                        {"chi_q", sol.chi_q},
                        {"theta_star", vec(sol.theta_star)},
                        {"median_equity", ev.mean()},
                        {"survival_prob", gaussian_survival(ev)},
                        {"stderr", 0.0}});
    }
    report["results"] = rows;
    report["chi_0"] = linear::multiplier(model, s.constraint, 0.0);
    report["theta_star_0"] = vec(linear::optimal_theta(model, s.constraint, 0.0));
}

void simple_report(json& report, const Scenario& s, const ValidatedModel& model) {
    const auto& m = model.raw();
    const Vector theta0 = linear::optimal_theta(model, s.constraint, 0.0);
    const auto raroc = linear::raroc_report(model, s.constraint);
    linear::SimpleModelInputs in;
    in.var_portfolio0 = theta0.dot(m.a * theta0);
    in.raroc0 = raroc.raroc0;
    in.var_y = m.sigma_y2;
    in.mean_y = m.m_y;
    in.m_var = s.constraint.nu;
    in.r = m.r;
    in.lambda = m.lambda;

    json rows = json::array();
    for (double q : s.quantities()) {
        in.q = q;
        const double capital =
            in.raroc0 * 0.5 * in.m_var * q * q * in.var_y / std::sqrt(in.var_portfolio0);
        rows.push_back({{"q", q},
                        {"price", linear::simple_model_price(in)},
                        {"decomposition",
                         decomposition_json(-q * in.mean_y, capital, 0.0, model.accrual())},
                        {"chi_q", nullptr},
                        {"survival_prob", nullptr},
                        {"stderr", 0.0}});
    }
    report["results"] = rows;
    report["simple_inputs"] = {{"var_portfolio0", in.var_portfolio0},
                               {"raroc0", in.raroc0},
                               {"var_y", in.var_y},
                               {"mean_y", in.mean_y},
                               {"m_var", in.m_var}};
    report["theta_star_0"] = vec(theta0);
    if (m.b.cwiseAbs().maxCoeff() > 0.0)
        report["warnings"].push_back(
            "b is not zero: the simple model assumes the deal is independent of the securities");
}

void shareholder_report(json& report, const Scenario& s, const ValidatedModel& model) {
    const auto& c = s.constraint;
    const auto batch = mc::sample(model, s.engine.n_paths, s.engine.seed, s.engine.antithetic);
    const auto& h = *s.engine.h_grid;
    const shareholder::MarginalPriceOptions options;
    const auto sol = shareholder::marginal_price(model, c, batch, h, options);
    const auto& comp = sol.components;
    const double k = model.accrual();
    const EquityEvaluator ev0(model, c.c0, sol.theta_star, 0.0, 0.0);

    json rows = json::array();
    for (double q : s.quantities()) {
        const double price = sol.price(q);
        const auto opt = shareholder::optimize_theta(model, c, q, price, batch, options.optimizer);
        const double chi = shareholder::multiplier_numeric(model, c, q, price, opt.theta, batch,
                                                           options.scaling)
                               .value *
                           sol.kappa;
        const EquityEvaluator ev(model, c.c0, opt.theta, q, price);
        const auto surv = mc::survival_probability(ev, batch);
        const auto gap = mc::positive_part_difference(ev, ev0, batch);
        rows.push_back(
            {{"q", q},
             {"price", price},
             {"decomposition",
              decomposition_json(-q * comp.survival_y / comp.survival,
                                 sol.price_coeffs.a2 * k * q * q,
                                 q * comp.chi0 * comp.g_q / comp.survival, k)},
             {"chi_q", chi},
             {"theta_star", vec(opt.theta)},
             {"value", estimate_json(opt.value)},
             {"value_gap", estimate_json(gap)},
             {"survival_prob", surv.value},
             {"survival_stderr", surv.std_error},
             {"stderr", sol.price_std_error(q)}});
    }
    report["results"] = rows;
    report["chi_0"] = sol.chi0_linear_units();
    report["theta_star_0"] = vec(sol.theta_star);

    json psi = estimate_json(sol.psi0.value);
    psi["boundary_integral"] =
        oracle::psi0_boundary_integral(model, c, sol.theta_star, sol.price_coeffs.a1);
    report["shareholder"] = {
        {"a1", sol.price_coeffs.a1},
        {"a2", sol.price_coeffs.a2},
        {"a1_stderr", sol.a1_std_error},
        {"a2_stderr", sol.a2_std_error},
        {"a1_a2_covariance", sol.a1_a2_covariance},
        {"chi0_prime", sol.chi0_prime_linear_units()},
        {"theta_prime", vec(sol.theta_prime)},
        {"psi0", psi},
        {"curvature", sol.curvature},
        {"constraint_scaling", "nu_squared"},
        {"value_0", estimate_json(sol.value)},
        {"survival_0", estimate_json(sol.survival)},
        {"default_probability", 1.0 - sol.survival.value},
        {"dq", sol.dq},
        {"stationarity", sol.stationarity},
    };
}

void compare_report(json& report, const Scenario& s, const ValidatedModel& model) {
    const auto& m = model.raw();
    const auto& c = s.constraint;
    const double k = 1.0 + m.r + m.lambda;
    const Vector mu = m.m1 - m.s0 * k;

    oracle::OracleConfig cfg;
    cfg.bisect_tol = s.engine.bisect_tol;
    cfg.seed = s.engine.seed;
    const oracle::ValueFunction value_fn = [&](double q, double price) {
        const auto objective = [&](const Vector& theta) {
            return q * m.m_y + theta.dot(mu) + (c.c0 + price) * k;
        };
        return oracle::grid_optimize(objective, model, c, q, cfg).value;
    };

    json rows = json::array();
    double max_diff = 0.0;
    bool median_equal = true;
    for (double q : s.quantities()) {
        json row = linear_row(s, model, q);
        const double closed = row["price"].get<double>();
        const double brute = oracle::indifference_root(value_fn, model, q, cfg);
        const double med = median::median_price(model, c, Deal{q}).price;
        const double diff = std::abs(closed - brute);
        max_diff = std::max(max_diff, diff);
        median_equal = median_equal && med == closed;
        row["oracle_price"] = brute;
        row["abs_price_diff"] = diff;
        row["median_price"] = med;
        rows.push_back(row);
    }
    report["results"] = rows;
    report["chi_0"] = linear::multiplier(model, c, 0.0);
    report["theta_star_0"] = vec(linear::optimal_theta(model, c, 0.0));
    report["comparison"] = {{"reference", "linear"},
                            {"oracle", "grid_optimize + bisection"},
                            {"sphere_grid_count", cfg.sphere_grid_count},
                            {"bisect_tol", cfg.bisect_tol},
                            {"max_abs_price_diff", max_diff},
                            {"median_equals_linear", median_equal}};
}

std::string csv_number(const json& v) {
    if (v.is_null()) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
}

std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool write_file(const std::string& path, const std::string& text, std::ostream& err) {
    std::ofstream f(path, std::ios::binary);
    if (f) f << text;
    if (!f) {
        err << "error: cannot write " << path << "\n";
        return false;
    }
    return true;
}

} // namespace

json build_report(const Scenario& s, const ValidatedModel& model) {
    json report;
    report["mode"] = to_string(s.engine.mode);
    report["scenario"] = to_json(s);
    report["warnings"] = json::array();
    switch (s.engine.mode) {
    case Mode::linear: linear_report(report, s, model); break;
    case Mode::shareholder: shareholder_report(report, s, model); break;
    case Mode::median: median_report(report, s, model); break;
    case Mode::simple: simple_report(report, s, model); break;
    case Mode::compare: compare_report(report, s, model); break;
    }
    report["raroc"] = raroc_json(model, s.constraint);
    return report;
}

std::string csv_table(const json& report) {
    std::ostringstream out;
    out << "q,price,expectation_term,capital_term,hedge_term,chi_q,survival_prob,stderr\n";
    for (const auto& row : report.at("results")) {
        const auto& d = row.at("decomposition");
        out << csv_number(row.at("q")) << ',' << csv_number(row.at("price")) << ','
            << csv_number(d.at("expectation_term")) << ',' << csv_number(d.at("capital_term"))
            << ',' << csv_number(d.at("hedge_term")) << ',' << csv_number(row.at("chi_q")) << ','
            << csv_number(row.at("survival_prob")) << ',' << csv_number(row.at("stderr"))
            << '\n';
    }
    return out.str();
}

int run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    std::string text;
    {
        std::ifstream f(options.scenario_path, std::ios::binary);
        if (!f) {
            err << "error: cannot read " << options.scenario_path << "\n";
            return exit_validation;
        }
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }

    json report;
    try {
        Scenario s = parse_scenario_text(text);
        if (options.mode) s.engine.mode = parse_mode(*options.mode);
        if (options.seed) s.engine.seed = *options.seed;
        if (options.paths) s.engine.n_paths = *options.paths;

        s.constraint.validate();
        const ValidatedModel model = validate_model(s.model);
        resolve(s, model);
        report = build_report(s, model);
    } catch (const ScenarioError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? exit_validation : exit_numerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numerical;
    }

    for (const auto& w : report["warnings"]) err << "warning: " << w.get<std::string>() << "\n";

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report["metadata"] = {{"tool", "kva"},
                          {"version", KVA_VERSION_STRING},
                          {"generated_at", options.deterministic ? "" : iso_now()},
                          {"elapsed_seconds", options.deterministic ? 0.0 : elapsed}};

    const std::string body = report.dump(2) + "\n";
    const std::string csv = options.csv_path ? csv_table(report) : std::string();
    if (options.out_path) {
        if (!write_file(*options.out_path, body, err)) return exit_io;
    } else {
        out << body;
    }
    if (options.csv_path && !write_file(*options.csv_path, csv, err)) return exit_io;
    return exit_ok;
}

} // namespace kva::cli
