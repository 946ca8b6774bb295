#include "kva/cli/run.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Capital-constrained indifference pricing"};
    app.require_subcommand(1);

    kva::cli::RunOptions opts;
    std::string out_path;
    std::string csv_path;
    std::string mode;
    std::uint64_t seed = 0;
    std::size_t paths = 0;

    auto* price = app.add_subcommand("price", "Price the deal described by a scenario file");
    price->add_option("scenario", opts.scenario_path, "Scenario JSON")->required();
    auto* out_opt = price->add_option("--out", out_path, "Write the JSON report here");
    auto* csv_opt = price->add_option("--csv", csv_path, "Write a per-quantity CSV table");
    auto* mode_opt = price->add_option("--mode", mode,
                                       "linear, shareholder, median, simple or compare");
    auto* seed_opt = price->add_option("--seed", seed, "Override the engine seed");
    auto* paths_opt = price->add_option("--paths", paths, "Override the number of paths");
    price->add_flag("--deterministic", opts.deterministic,
                    "Zero timestamps so identical runs give identical reports");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kva::cli::exit_validation;
    }

    if (*out_opt) opts.out_path = out_path;
    if (*csv_opt) opts.csv_path = csv_path;
    if (*mode_opt) opts.mode = mode;
    if (*seed_opt) opts.seed = seed;
    if (*paths_opt) opts.paths = paths;
    return kva::cli::run(opts, std::cout, std::cerr);
}
