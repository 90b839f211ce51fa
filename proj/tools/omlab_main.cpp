#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "omlab/runner.hpp"

namespace {

int run(const std::string& command, const std::string& config_path, const std::string& out_dir,
        std::optional<std::uint64_t> seed, unsigned workers) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot open config " << config_path << '\n';
        return 2;
    }
    nlohmann::json config;
    try {
        in >> config;
    } catch (const std::exception& e) {
        std::cerr << "error: config is not valid JSON: " << e.what() << '\n';
        return 2;
    }
    try {
        omlab::RunOptions opts;
        opts.seed_override = seed;
        opts.workers = workers;
        const auto artifacts = omlab::run_command(command, config, out_dir, opts);
        for (const auto& a : artifacts) std::cerr << "wrote " << out_dir << '/' << a << '\n';
        return 0;
    } catch (const omlab::SchemaError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const omlab::HypothesisError& e) {
        std::cerr << "hypothesis validation failed: " << e.what() << '\n';
        return 3;
    } catch (const omlab::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Experiment driver for product measures on weighted sequence spaces: "
                 "small-ball ratios, shift densities, dichotomies, sublevel boxes, "
                 "variational probes and MAP studies"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;

    const char* names[] = {"validate",   "sample",       "om-eval",
                           "shift-density", "dichotomy", "small-ball",
                           "om-ratio",   "continuity-ratio", "gamma-probe",
                           "equicoercivity-box", "map",  "map-converge",
                           "lemma-checks"};
    for (const char* name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--workers", workers, "worker threads for Monte Carlo blocks");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    return run(command, config_path, out_dir, seed, workers);
}
