#include "kva/cli/scenario.hpp"

#include "kva/shareholder.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace kva::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ScenarioError(path + ": " + what);
}

const json& object_at(const json& doc, const std::string& path,
                      std::initializer_list<const char*> allowed) {
    if (!doc.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : doc.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return key == k; });
        if (!known) fail(path + "." + key, "unknown key");
    }
    return doc;
}

const json& member(const json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    return *it;
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
}

std::vector<double> number_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

Vector vector_of(const json& v, const std::string& path) {
    const auto xs = number_array(v, path);
    if (xs.empty()) fail(path, "must not be empty");
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

Matrix matrix_of(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    Matrix m;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto row = number_array(v[static_cast<std::size_t>(i)],
                                      path + "[" + std::to_string(i) + "]");
        if (i == 0) m.resize(rows, static_cast<Eigen::Index>(row.size()));
        if (static_cast<Eigen::Index>(row.size()) != m.cols()) fail(path, "ragged rows");
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = row[static_cast<std::size_t>(j)];
    }
    return m;
}

std::uint64_t unsigned_integer(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) fail(path, "must be non-negative");
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    fail(path, "expected a non-negative integer");
}

json array_of(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

} // namespace

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::linear: return "linear";
    case Mode::shareholder: return "shareholder";
    case Mode::median: return "median";
    case Mode::simple: return "simple";
    case Mode::compare: return "compare";
    }
    return "unknown";
}

Mode parse_mode(const std::string& name) {
    for (Mode m : {Mode::linear, Mode::shareholder, Mode::median, Mode::simple, Mode::compare})
        if (to_string(m) == name) return m;
    throw ScenarioError("engine.mode: unknown mode '" + name +
                        "' (linear, shareholder, median, simple, compare)");
}

std::vector<double> Scenario::quantities() const {
    std::vector<double> out{q};
    for (double x : q_grid)
        if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
    return out;
}

Scenario parse_scenario(const json& doc) {
    object_at(doc, "$", {"spec_version", "model", "constraint", "deal", "engine"});
    const json& version = member(doc, "$", "spec_version");
    if (!version.is_number_integer() || version.get<std::int64_t>() != kSpecVersion)
        fail("$.spec_version", "must be " + std::to_string(kSpecVersion));

    Scenario s;
    const json& model = object_at(member(doc, "$", "model"), "$.model",
                                  {"s0", "m1", "r", "lambda", "a", "b", "sigma_y2", "m_y"});
    s.model.s0 = vector_of(member(model, "$.model", "s0"), "$.model.s0");
    s.model.m1 = vector_of(member(model, "$.model", "m1"), "$.model.m1");
    s.model.r = number(member(model, "$.model", "r"), "$.model.r");
    s.model.lambda = number(member(model, "$.model", "lambda"), "$.model.lambda");
    s.model.a = matrix_of(member(model, "$.model", "a"), "$.model.a");
    s.model.b = vector_of(member(model, "$.model", "b"), "$.model.b");
    s.model.sigma_y2 = number(member(model, "$.model", "sigma_y2"), "$.model.sigma_y2");
    s.model.m_y = number(member(model, "$.model", "m_y"), "$.model.m_y");

    const json& constraint =
        object_at(member(doc, "$", "constraint"), "$.constraint", {"c0", "nu"});
    s.constraint.c0 = number(member(constraint, "$.constraint", "c0"), "$.constraint.c0");
    s.constraint.nu = number(member(constraint, "$.constraint", "nu"), "$.constraint.nu");

    const json& deal = object_at(member(doc, "$", "deal"), "$.deal", {"q", "q_grid"});
    s.q = number(member(deal, "$.deal", "q"), "$.deal.q");
    if (deal.contains("q_grid")) s.q_grid = number_array(deal["q_grid"], "$.deal.q_grid");

    if (doc.contains("engine")) {
        const json& e = object_at(doc["engine"], "$.engine",
                                  {"n_paths", "seed", "antithetic", "h_grid", "bisect_tol", "mode"});
        if (e.contains("n_paths")) {
            const auto n = unsigned_integer(e["n_paths"], "$.engine.n_paths");
            s.engine.n_paths = static_cast<std::size_t>(n);
        }
        if (e.contains("seed")) s.engine.seed = unsigned_integer(e["seed"], "$.engine.seed");
        if (e.contains("antithetic")) {
            if (!e["antithetic"].is_boolean()) fail("$.engine.antithetic", "expected a boolean");
            s.engine.antithetic = e["antithetic"].get<bool>();
        }
        if (e.contains("h_grid")) s.engine.h_grid = number_array(e["h_grid"], "$.engine.h_grid");
        if (e.contains("bisect_tol"))
            s.engine.bisect_tol = number(e["bisect_tol"], "$.engine.bisect_tol");
        if (e.contains("mode")) {
            if (!e["mode"].is_string()) fail("$.engine.mode", "expected a string");
            s.engine.mode = parse_mode(e["mode"].get<std::string>());
        }
    }
    return s;
}

Scenario parse_scenario_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("malformed JSON: ") + e.what());
    }
    return parse_scenario(doc);
}

void resolve(Scenario& s, const ValidatedModel& model) {
    auto& e = s.engine;
    if (e.n_paths < 2) fail("$.engine.n_paths", "must be at least 2");
    if (e.antithetic && e.n_paths % 2 != 0)
        fail("$.engine.n_paths", "must be even when antithetic is true");
    if (!(e.bisect_tol > 0.0)) fail("$.engine.bisect_tol", "must be positive");
    if (!e.h_grid) e.h_grid = shareholder::default_h_grid(model, s.constraint);
    const auto& h = *e.h_grid;
    if (h.size() < 2) fail("$.engine.h_grid", "needs at least two step sizes");
    for (std::size_t k = 0; k < h.size(); ++k)
        if (!(h[k] > 0.0) || (k > 0 && !(h[k] < h[k - 1])))
            fail("$.engine.h_grid", "must be positive and strictly decreasing");
}

nlohmann::json to_json(const Scenario& s) {
    json model;
    model["s0"] = array_of(s.model.s0);
    model["m1"] = array_of(s.model.m1);
    model["r"] = s.model.r;
    model["lambda"] = s.model.lambda;
    json a = json::array();
    for (Eigen::Index i = 0; i < s.model.a.rows(); ++i) a.push_back(array_of(s.model.a.row(i).transpose()));
    model["a"] = a;
    model["b"] = array_of(s.model.b);
    model["sigma_y2"] = s.model.sigma_y2;
    model["m_y"] = s.model.m_y;

    json engine;
    engine["n_paths"] = s.engine.n_paths;
    engine["seed"] = s.engine.seed;
    engine["antithetic"] = s.engine.antithetic;
    engine["h_grid"] = s.engine.h_grid ? json(*s.engine.h_grid) : json(nullptr);
    engine["bisect_tol"] = s.engine.bisect_tol;
    engine["mode"] = to_string(s.engine.mode);

    json out;
    out["spec_version"] = kSpecVersion;
    out["model"] = model;
    out["constraint"] = {{"c0", s.constraint.c0}, {"nu", s.constraint.nu}};
    out["deal"] = {{"q", s.q}, {"q_grid", s.q_grid}};
    out["engine"] = engine;
    return out;
}

} // namespace kva::cli
