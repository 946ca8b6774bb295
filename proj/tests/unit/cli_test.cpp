#include "kva/cli/run.hpp"
#include "kva/cli/scenario.hpp"
#include "kva/linear.hpp"

#include "support/instances.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kva;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("kva_cli_" + std::string(::testing::UnitTest::GetInstance()
                                             ->current_test_info()
                                             ->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    json canon_json() const {
        std::ifstream f(test::fixture_path("canon.json"));
        return json::parse(f);
    }

    std::string write(const std::string& name, const std::string& text) const {
        const auto p = (dir_ / name).string();
        std::ofstream(p) << text;
        return p;
    }

    static std::string read(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    }

    int run(cli::RunOptions opts) {
        out_.str("");
        err_.str("");
        return cli::run(opts, out_, err_);
    }

    int run_json(const json& scenario, std::optional<std::string> mode = {}) {
        cli::RunOptions opts;
        opts.scenario_path = write("scenario.json", scenario.dump());
        opts.out_path = (dir_ / "report.json").string();
        opts.mode = std::move(mode);
        return run(opts);
    }

    json report() const { return json::parse(read((dir_ / "report.json").string())); }

    fs::path dir_;
    std::ostringstream out_, err_;
};

} // namespace

TEST_F(CliTest, ParsesFixture) {
    std::ifstream f(test::fixture_path("canon.json"));
    const auto s = cli::parse_scenario(json::parse(f));
    EXPECT_EQ(s.q, 0.1);
    EXPECT_EQ(s.engine.mode, cli::Mode::linear);
    EXPECT_EQ(s.quantities(), (std::vector<double>{0.1, 0.025, 0.05, 0.2}));
    EXPECT_EQ(s.model.a(0, 1), 2.0);
}

TEST_F(CliTest, RejectsSchemaViolations) {
    auto unknown = canon_json();
    unknown["model"]["extra"] = 1.0;
    EXPECT_THROW(cli::parse_scenario_text(unknown.dump()), cli::ScenarioError);

    auto version = canon_json();
    version["spec_version"] = 2;
    EXPECT_THROW(cli::parse_scenario_text(version.dump()), cli::ScenarioError);

    auto missing = canon_json();
    missing["constraint"].erase("nu");
    EXPECT_THROW(cli::parse_scenario_text(missing.dump()), cli::ScenarioError);

    auto wrong_type = canon_json();
    wrong_type["deal"]["q"] = "0.1";
    EXPECT_THROW(cli::parse_scenario_text(wrong_type.dump()), cli::ScenarioError);

    EXPECT_THROW(cli::parse_mode("exotic"), cli::ScenarioError);
}

TEST_F(CliTest, MalformedJsonWritesNothing) {
    cli::RunOptions opts;
    opts.scenario_path = write("bad.json", "{\"spec_version\": 1,");
    opts.out_path = (dir_ / "report.json").string();
    opts.csv_path = (dir_ / "table.csv").string();
    EXPECT_EQ(run(opts), cli::exit_validation);
    EXPECT_FALSE(fs::exists(*opts.out_path));
    EXPECT_FALSE(fs::exists(*opts.csv_path));
    EXPECT_NE(err_.str().find("error"), std::string::npos);
}

TEST_F(CliTest, MissingScenarioFile) {
    cli::RunOptions opts;
    opts.scenario_path = (dir_ / "nope.json").string();
    EXPECT_EQ(run(opts), cli::exit_validation);
}

TEST_F(CliTest, InvalidModelIsValidationError) {
    auto s = canon_json();
    s["model"]["a"] = json::array({json::array({1.0, 2.0}), json::array({2.0, 1.0})});
    EXPECT_EQ(run_json(s), cli::exit_validation);
    EXPECT_FALSE(fs::exists(dir_ / "report.json"));

    auto c = canon_json();
    c["constraint"]["c0"] = -1.0;
    EXPECT_EQ(run_json(c), cli::exit_validation);
}

TEST_F(CliTest, InfeasibleQuantityIsNumericalError) {
    auto s = canon_json();
    s["deal"]["q"] = 3.0;
    EXPECT_EQ(run_json(s), cli::exit_numerical);
    EXPECT_FALSE(fs::exists(dir_ / "report.json"));
}

TEST_F(CliTest, LinearReport) {
    ASSERT_EQ(run_json(canon_json()), cli::exit_ok) << err_.str();
    const auto r = report();
    EXPECT_EQ(r["mode"], "linear");
    ASSERT_EQ(r["results"].size(), 4u);
    const auto& row = r["results"][0];
    const auto exact = linear::price_exact(test::canon(), test::canon_constraint(), Deal{0.1});
    EXPECT_EQ(row["q"].get<double>(), 0.1);
    EXPECT_NEAR(row["price"].get<double>(), 0.123685, 2e-6);
    EXPECT_EQ(row["price"].get<double>(), exact.price_exact);
    const auto& d = row["decomposition"];
    EXPECT_NEAR(d["expectation_term"].get<double>() + d["capital_term"].get<double>() +
                    d["hedge_term"].get<double>(),
                row["price"].get<double>() * d["accrual"].get<double>(), 1e-14);
    EXPECT_NEAR(r["raroc"]["expected_pnl"].get<double>(), 4.256740, 1e-6);
    EXPECT_TRUE(r["metadata"]["generated_at"].get<std::string>().size() > 0);
}

TEST_F(CliTest, CsvTable) {
    cli::RunOptions opts;
    opts.scenario_path = test::fixture_path("canon.json");
    opts.csv_path = (dir_ / "table.csv").string();
    ASSERT_EQ(run(opts), cli::exit_ok);
    const auto csv = read(*opts.csv_path);
    std::istringstream lines(csv);
    std::string header, line;
    std::getline(lines, header);
    EXPECT_EQ(header, "q,price,expectation_term,capital_term,hedge_term,chi_q,survival_prob,stderr");
    int rows = 0;
    while (std::getline(lines, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
        ++rows;
    }
    EXPECT_EQ(rows, 4);
    // report went to stdout
    EXPECT_NO_THROW(json::parse(out_.str()));
}

TEST_F(CliTest, CompareModeAgrees) {
    ASSERT_EQ(run_json(canon_json(), "compare"), cli::exit_ok) << err_.str();
    const auto r = report();
    EXPECT_LT(r["comparison"]["max_abs_price_diff"].get<double>(), 1e-8);
    EXPECT_TRUE(r["comparison"]["median_equals_linear"].get<bool>());
}

TEST_F(CliTest, MedianAndSimpleModes) {
    ASSERT_EQ(run_json(canon_json(), "median"), cli::exit_ok) << err_.str();
    const auto med = report();
    EXPECT_EQ(med["results"][0]["price"].get<double>(),
              linear::price_exact(test::canon(), test::canon_constraint(), Deal{0.1}).price_exact);

    ASSERT_EQ(run_json(canon_json(), "simple"), cli::exit_ok) << err_.str();
    const auto simple = report();
    EXPECT_FALSE(simple["warnings"].empty()); // CANON has b != 0
}

TEST_F(CliTest, ShareholderModeIsDeterministic) {
    auto s = canon_json();
    s["constraint"]["c0"] = 2.0;
    s["deal"]["q_grid"] = json::array();
    s["engine"] = {{"mode", "shareholder"}, {"n_paths", 100000}, {"seed", 7}};
    cli::RunOptions opts;
    opts.scenario_path = write("scenario.json", s.dump());
    opts.deterministic = true;
    opts.out_path = (dir_ / "a.json").string();
    ASSERT_EQ(run(opts), cli::exit_ok) << err_.str();
    opts.out_path = (dir_ / "b.json").string();
    ASSERT_EQ(run(opts), cli::exit_ok);
    EXPECT_EQ(read((dir_ / "a.json").string()), read((dir_ / "b.json").string()));

    const auto r = json::parse(read((dir_ / "a.json").string()));
    EXPECT_EQ(r["metadata"]["generated_at"], "");
    EXPECT_EQ(r["scenario"]["engine"]["seed"], 7);
    const double price = r["results"][0]["price"].get<double>();
    EXPECT_NEAR(price, linear::price_exact(test::canon(), CapitalConstraint{2.0, 2.5}, Deal{0.1})
                           .price_exact,
                8.0 * r["results"][0]["stderr"].get<double>() + 1e-3);
}

TEST_F(CliTest, OverridesReachTheScenarioEcho) {
    cli::RunOptions opts;
    opts.scenario_path = test::fixture_path("canon.json");
    opts.out_path = (dir_ / "report.json").string();
    opts.seed = 99;
    opts.paths = 2000;
    ASSERT_EQ(run(opts), cli::exit_ok);
    const auto r = report();
    EXPECT_EQ(r["scenario"]["engine"]["seed"], 99);
    EXPECT_EQ(r["scenario"]["engine"]["n_paths"], 2000);
    EXPECT_EQ(r["scenario"]["engine"]["h_grid"].size(), 3u);
}

TEST_F(CliTest, UnwritableOutputIsIoError) {
    cli::RunOptions opts;
    opts.scenario_path = test::fixture_path("canon.json");
    opts.out_path = (dir_ / "missing_dir" / "report.json").string();
    EXPECT_EQ(run(opts), cli::exit_io);
}

TEST_F(CliTest, ExecutableExitCodes) {
    const std::string exe = KVA_CLI_EXE;
    const auto out = (dir_ / "r.json").string();
    auto status = [](const std::string& cmd) {
        const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    EXPECT_EQ(status(exe + " price " + test::fixture_path("canon.json") + " --out " + out), 0);
    EXPECT_TRUE(fs::exists(out));
    EXPECT_EQ(status(exe + " price " + write("bad.json", "[") + " --out " + out + "2"), 2);
    EXPECT_EQ(status(exe + " price"), 2);
    EXPECT_EQ(status(exe + " price " + test::fixture_path("canon.json") + " --mode nope"), 2);
}
