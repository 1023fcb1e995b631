#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geolangevin/dynamics.hpp"
#include "geolangevin/observables.hpp"

namespace geolangevin::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kSuccess = 0, kCheckFailure = 1, kConfigError = 2 };

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"simulate",        "stationary_test", "decay_fit",
                                                   "time_average",    "geometry_check",  "operator_check",
                                                   "rate_constants",  "fld_layout"};
    return names;
}

struct ExperimentConfig {
    std::string manifold;
    nlohmann::json manifold_params = nlohmann::json::object();
    std::string model;  // "langevin" or "fld"
    nlohmann::json model_params = nlohmann::json::object();
    IntegratorConfig integrator;
    std::string experiment;
    std::vector<ObservableSpec> observables;
    std::string output_dir = "out";
    nlohmann::json settings = nlohmann::json::object();
    nlohmann::json raw;
};

/// Schema and registry diagnostics; empty when the configuration is valid.
std::vector<std::string> validate_config(const nlohmann::json& config);

/// Parses a validated configuration; throws ConfigError listing the diagnostics.
ExperimentConfig parse_config(const nlohmann::json& config);

/// Reads and parses JSON from a file; throws ConfigError on I/O or syntax errors.
nlohmann::json load_json(const std::string& path);

/// Builds the manifold named in the configuration, including a declared sampling box.
AtlasManifold build_manifold(const ExperimentConfig& cfg);

/// Builds the model parameters against the manifold.
ModelParams build_model(const AtlasManifold& m, const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Runs the experiment, writes manifest.json and experiment outputs into the
/// output directory, and returns the exit code.
int run_experiment(ExperimentConfig cfg, std::optional<std::uint64_t> seed_override,
                   std::optional<std::string> out_override, std::ostream& log);

} // namespace geolangevin::cli
