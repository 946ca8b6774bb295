#pragma once

#include "kva/model.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kva::cli {

/// Malformed JSON, schema violations and out-of-range settings.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode { linear, shareholder, median, simple, compare };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name); // throws ScenarioError

struct EngineSettings {
    std::size_t n_paths = 1'000'000;
    std::uint64_t seed = 42;
    bool antithetic = true;
    std::optional<std::vector<double>> h_grid; // resolved from the model when absent
    double bisect_tol = 1e-9;
    Mode mode = Mode::linear;
};

struct Scenario {
    MarketModel model;
    CapitalConstraint constraint;
    double q = 0.0;
    std::vector<double> q_grid;
    EngineSettings engine;

    /// q followed by the q_grid entries not equal to it.
    std::vector<double> quantities() const;
};

inline constexpr int kSpecVersion = 1;

/// Schema check and conversion; unknown keys are rejected.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario parse_scenario_text(const std::string& text);

/// Fills defaults that depend on the model (h_grid) and checks the
/// engine settings against it.
void resolve(Scenario& scenario, const ValidatedModel& model);

nlohmann::json to_json(const Scenario& scenario);

} // namespace kva::cli
