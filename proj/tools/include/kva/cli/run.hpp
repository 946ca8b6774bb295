#pragma once

#include "kva/cli/scenario.hpp"

#include "json.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace kva::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_io = 1,
    exit_validation = 2,
    exit_numerical = 3,
};

struct RunOptions {
    std::string scenario_path;
    std::optional<std::string> out_path; // report goes to stdout when absent
    std::optional<std::string> csv_path;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    bool deterministic = false;
};

/// Prices every quantity of the scenario; throws kva::Error on numerical
/// failure. The scenario must already be resolved.
nlohmann::json build_report(const Scenario& scenario, const ValidatedModel& model);

/// One row per quantity: q, price, expectation_term, capital_term,
/// hedge_term, chi_q, survival_prob, stderr.
std::string csv_table(const nlohmann::json& report);

/// Reads, validates, prices and writes. Nothing is written unless every
/// step succeeds.
int run(const RunOptions& options, std::ostream& out, std::ostream& err);

} // namespace kva::cli
