#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "geolangevin/cli.hpp"
#include "geolangevin/errors.hpp"

namespace cli = geolangevin::cli;

int main(int argc, char** argv) {
    CLI::App app{"Geometric Langevin and fibre lay-down experiment runner"};
    app.set_version_flag("--version", cli::kVersion);
    app.require_subcommand(1);

    std::string run_config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    CLI::App* run = app.add_subcommand("run", "Run the experiment described by a JSON configuration");
    run->add_option("config", run_config, "Configuration file")->required();
    run->add_option("--seed", seed, "Override integrator.seed");
    run->add_option("--out", out, "Override output_dir");

    std::string validate_config;
    CLI::App* validate = app.add_subcommand("validate", "Check a configuration without running it");
    validate->add_option("config", validate_config, "Configuration file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const auto diags = cli::validate_config(cli::load_json(validate_config));
            for (const auto& d : diags) std::cout << "error: " << d << '\n';
            if (diags.empty()) std::cout << "ok\n";
            return diags.empty() ? cli::kSuccess : cli::kConfigError;
        }
        const cli::ExperimentConfig cfg = cli::parse_config(cli::load_json(run_config));
        return cli::run_experiment(cfg, seed, out, std::cout);
    } catch (const geolangevin::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kCheckFailure;
    }
}
