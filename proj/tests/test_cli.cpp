#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

#include "geolangevin/cli.hpp"
#include "geolangevin/errors.hpp"

using namespace geolangevin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("geolangevin_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json base_config() {
    return json::parse(R"({
        "manifold": {"name": "sphere2"},
        "model": {"fld": {"sigma": 1.0}},
        "integrator": {"dt": 0.01, "t_final": 1.0, "record_stride": 5, "seed": 4},
        "experiment": "simulate",
        "settings": {"n_traj": 3}
    })");
}

bool mentions(const std::vector<std::string>& diags, const std::string& needle) {
    for (const auto& d : diags)
        if (d.find(needle) != std::string::npos) return true;
    return false;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(GEOLANGEVIN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("validation diagnostics") {
    CHECK(cli::validate_config(base_config()).empty());

    json bad = base_config();
    bad["manifold"]["name"] = "klein_bottle";
    CHECK(mentions(cli::validate_config(bad), "unknown manifold"));

    json sigma = base_config();
    sigma["model"] = json::parse(R"({"langevin": {"alpha": 1.0, "beta": 1.0, "sigma": 1.0}})");
    CHECK(mentions(cli::validate_config(sigma), "sqrt(2 alpha / beta)"));

    json two = base_config();
    two["model"]["langevin"] = json::object();
    CHECK(mentions(cli::validate_config(two), "exactly one"));

    json obs = base_config();
    obs["observables"] = json::array({json{{"name", "entropy"}}});
    CHECK(mentions(cli::validate_config(obs), "unknown observable"));

    json pot = base_config();
    pot["model"]["fld"]["potential"] = json{{"name", "coulomb"}};
    CHECK(mentions(cli::validate_config(pot), "unknown potential"));

    json rates = base_config();
    rates["experiment"] = "rate_constants";
    CHECK(mentions(cli::validate_config(rates), "c2"));

    CHECK_THROWS_AS(cli::parse_config(bad), ConfigError);
}

TEST_CASE("rate constants experiment reports the model constants") {
    json c = json::parse(R"({
        "manifold": {"name": "flat_torus2"},
        "model": {"langevin": {"alpha": 1.0, "beta": 1.0}},
        "experiment": "rate_constants",
        "settings": {"lambda": 1.0, "c2": 1.0}
    })");
    const fs::path out = scratch("rates");
    std::ostringstream log;
    CHECK(cli::run_experiment(cli::parse_config(c), std::nullopt, out.string(), log) == cli::kSuccess);
    const json r = json::parse(slurp(out / "rates.json"));
    CHECK(r["lambda_m"].get<double>() == 1.0);
    CHECK(r["lambda_M"].get<double>() == 1.0);
    CHECK(r["c1"].get<double>() == 0.5);
    CHECK(r["kappa2"].get<double>() > 0.0);
    const json m = json::parse(slurp(out / "manifest.json"));
    CHECK(m["passed"].get<bool>());
    CHECK(m["config_hash"].get<std::string>().size() == 16);
}

TEST_CASE("geometry check on the sphere passes") {
    json c = base_config();
    c["experiment"] = "geometry_check";
    const fs::path out = scratch("geometry");
    std::ostringstream log;
    CHECK(cli::run_experiment(cli::parse_config(c), std::nullopt, out.string(), log) == cli::kSuccess);
    const json m = json::parse(slurp(out / "manifest.json"));
    bool liouville = false, eigen = false;
    for (const auto& chk : m["checks"]) {
        liouville = liouville || chk["name"] == "liouville_residual";
        eigen = eigen || chk["name"] == "eigenrelation_residual";
    }
    CHECK(liouville);
    CHECK(eigen);
}

TEST_CASE("reruns produce byte-identical CSV payloads") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    std::ostringstream log;
    const cli::ExperimentConfig cfg = cli::parse_config(base_config());
    REQUIRE(cli::run_experiment(cfg, std::nullopt, a.string(), log) == cli::kSuccess);
    REQUIRE(cli::run_experiment(cfg, std::nullopt, b.string(), log) == cli::kSuccess);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        if (entry.path().extension() != ".csv") continue;
        CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
        ++compared;
    }
    CHECK(compared >= 3);
    const fs::path c = scratch("det_c");
    REQUIRE(cli::run_experiment(cfg, 99u, c.string(), log) == cli::kSuccess);
    CHECK(slurp(a / "trajectory_000.csv") != slurp(c / "trajectory_000.csv"));
}

TEST_CASE("fld layout on a sine sheet emits embedded points") {
    json c = json::parse(R"({
        "manifold": {"name": "graph_surface", "height": "sine_sheet", "a": 0.5},
        "model": {"fld": {"sigma": 0.5}},
        "integrator": {"dt": 0.01, "t_final": 1.0, "seed": 2},
        "experiment": "fld_layout",
        "settings": {"initial": {"x": [0.0, 0.0], "v": [1.0, 0.0]}}
    })");
    const fs::path out = scratch("layout");
    std::ostringstream log;
    CHECK(cli::run_experiment(cli::parse_config(c), std::nullopt, out.string(), log) == cli::kSuccess);
    CHECK(fs::exists(out / "laydown.csv"));
    CHECK(fs::file_size(out / "laydown.csv") > 100);
}

TEST_CASE("exit-code contract of the command-line tool") {
    const fs::path dir = scratch("exit");
    json ok = base_config();
    ok["experiment"] = "geometry_check";
    std::ofstream(dir / "ok.json") << ok.dump();
    json bad = base_config();
    bad["manifold"]["name"] = "klein_bottle";
    std::ofstream(dir / "bad.json") << bad.dump();
    std::ofstream(dir / "broken.json") << "{ not json";
    // A check that cannot pass: decay fit demanding r^2 above one.
    json fail = json::parse(R"({
        "manifold": {"name": "flat_torus2"},
        "model": {"fld": {"sigma": 2.0}},
        "integrator": {"dt": 0.05, "seed": 1},
        "experiment": "decay_fit",
        "observables": [{"name": "cos_x1"}],
        "settings": {"times": [0.5, 1.0, 1.5, 2.0], "n_traj": 1000, "min_r2": 1.5}
    })");
    std::ofstream(dir / "fail.json") << fail.dump();

    const std::string out = " --out " + (dir / "out").string();
    CHECK(run_binary("validate " + (dir / "ok.json").string()) == 0);
    CHECK(run_binary("validate " + (dir / "bad.json").string()) == 2);
    CHECK(run_binary("run " + (dir / "ok.json").string() + out) == 0);
    CHECK(run_binary("run " + (dir / "bad.json").string() + out) == 2);
    CHECK(run_binary("run " + (dir / "broken.json").string() + out) == 2);
    CHECK(run_binary("run " + (dir / "missing.json").string() + out) == 2);
    CHECK(run_binary("run " + (dir / "fail.json").string() + out) == 1);
}
