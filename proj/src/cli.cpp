#include "geolangevin/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "geolangevin/analysis.hpp"
#include "geolangevin/errors.hpp"
#include "geolangevin/kernels.hpp"
#include "geolangevin/measures.hpp"

namespace geolangevin::cli {

using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys = {"manifold",    "model",    "integrator", "experiment",
                                             "observables", "settings", "output_dir"};
const std::set<std::string> kManifoldNames = {"euclidean", "sphere2", "flat_torus2", "graph_surface"};

bool is_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

// Numeric entries of an object, skipping the listed keys.
ParamMap numeric_params(const json& obj, const std::string& where, std::vector<std::string>& diags,
                        const std::set<std::string>& skip = {"name"}) {
    ParamMap out;
    if (!obj.is_object()) return out;
    for (const auto& [key, value] : obj.items()) {
        if (skip.count(key)) continue;
        if (!is_number(value)) {
            diags.push_back(where + "." + key + ": expected a number");
            continue;
        }
        out[key] = value.get<double>();
    }
    return out;
}

// Named registry entry given as "name" or {"name": ..., "params": {...}} or {"name": ..., key: value}.
std::optional<std::pair<std::string, ParamMap>> named_entry(const json& j, const std::string& where,
                                                            std::vector<std::string>& diags) {
    if (j.is_string()) return std::make_pair(j.get<std::string>(), ParamMap{});
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
        diags.push_back(where + ": expected a name string or an object with a \"name\" field");
        return std::nullopt;
    }
    ParamMap params;
    if (j.contains("params")) {
        if (!j["params"].is_object()) {
            diags.push_back(where + ".params: expected an object");
        } else {
            params = numeric_params(j["params"], where + ".params", diags);
        }
    }
    for (auto& [k, v] : numeric_params(j, where, diags, {"name", "params"})) params[k] = v;
    return std::make_pair(j["name"].get<std::string>(), params);
}

template <typename T>
T setting(const json& settings, const std::string& key, T fallback) {
    if (!settings.is_object() || !settings.contains(key)) return fallback;
    return settings.at(key).get<T>();
}

std::vector<double> setting_list(const json& settings, const std::string& key, std::vector<double> fallback) {
    if (!settings.is_object() || !settings.contains(key)) return fallback;
    return settings.at(key).get<std::vector<double>>();
}

Scheme parse_scheme(const std::string& s) {
    if (s == "strang" || s == "strang_baoab_like") return Scheme::strang_baoab_like;
    if (s == "euler_heun") return Scheme::euler_heun;
    throw ConfigError("integrator.scheme: unknown scheme '" + s + "' (strang, euler_heun)");
}

int manifold_dimension(const json& manifold) {
    const std::string name = manifold.value("name", "");
    if (name == "euclidean") return manifold.contains("dim") && manifold["dim"].is_number_integer()
                                       ? manifold["dim"].get<int>()
                                       : 1;
    return 2;
}

void validate_manifold(const json& j, std::vector<std::string>& diags) {
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
        diags.push_back("manifold: expected an object with a \"name\" string");
        return;
    }
    const std::string name = j["name"];
    if (!kManifoldNames.count(name)) {
        diags.push_back("manifold.name: unknown manifold '" + name +
                        "' (euclidean, sphere2, flat_torus2, graph_surface)");
        return;
    }
    if (name == "euclidean") {
        if (j.contains("dim") && (!j["dim"].is_number_integer() || j["dim"] < 1 || j["dim"] > kMaxDim)) {
            diags.push_back("manifold.dim: expected an integer in [1, " + std::to_string(kMaxDim) + "]");
        }
    }
    if (name == "sphere2" && j.contains("switch_threshold")) {
        const json& t = j["switch_threshold"];
        if (!is_number(t) || t.get<double>() <= 1.0 || t.get<double>() >= 10.0) {
            diags.push_back("manifold.switch_threshold: expected a number in (1, 10)");
        }
    }
    if (name == "graph_surface") {
        const std::string h = j.value("height", "paraboloid");
        if (h != "paraboloid" && h != "sine_sheet") {
            diags.push_back("manifold.height: unknown height function '" + h + "' (paraboloid, sine_sheet)");
        }
        for (const char* key : {"a", "k"}) {
            if (j.contains(key) && !is_number(j[key])) diags.push_back(std::string("manifold.") + key + ": expected a number");
        }
    }
    if (j.contains("sampling_box")) {
        const json& b = j["sampling_box"];
        const auto dim = static_cast<std::size_t>(manifold_dimension(j));
        bool ok = b.is_object() && b.contains("lo") && b.contains("hi") && b["lo"].is_array() && b["hi"].is_array() &&
                  b["lo"].size() == dim && b["hi"].size() == dim;
        if (ok) {
            for (std::size_t i = 0; i < dim; ++i) {
                ok = ok && is_number(b["lo"][i]) && is_number(b["hi"][i]) &&
                     b["lo"][i].get<double>() < b["hi"][i].get<double>();
            }
        }
        if (!ok) diags.push_back("manifold.sampling_box: expected {lo, hi} arrays of length " + std::to_string(dim) + " with lo < hi");
        if (name == "sphere2" || name == "flat_torus2") {
            diags.push_back("manifold.sampling_box: " + name + " has built-in sampling boxes");
        }
    }
}

} // namespace

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("configuration is not valid JSON: " + std::string(e.what()));
    }
}

AtlasManifold build_manifold(const ExperimentConfig& cfg) {
    const json& p = cfg.manifold_params;
    AtlasManifold m;
    if (cfg.manifold == "euclidean") {
        m = euclidean(p.value("dim", 1));
    } else if (cfg.manifold == "sphere2") {
        m = sphere2_stereographic(p.value("switch_threshold", 1.5));
    } else if (cfg.manifold == "flat_torus2") {
        m = flat_torus2();
    } else if (cfg.manifold == "graph_surface") {
        m = graph_surface(height_function(p.value("height", std::string("paraboloid")), p.value("a", 1.0), p.value("k", 1.0)));
    } else {
        throw ConfigError("unknown manifold '" + cfg.manifold + "'");
    }
    if (p.contains("sampling_box")) {
        SamplingBox box;
        box.chart_id = m.charts.front().chart_id;
        const auto lo = p["sampling_box"]["lo"].get<std::vector<double>>();
        const auto hi = p["sampling_box"]["hi"].get<std::vector<double>>();
        const int d = m.dimension;
        box.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), d);
        box.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), d);
        // sup of sqrt(det g) over a lattice of the box, with a safety margin;
        // sampling raises EnvelopeViolation if the margin is insufficient.
        const int n = d <= 2 ? 65 : 9;
        double sup = 0.0;
        std::vector<int> idx(d, 0);
        for (;;) {
            Vec x(d);
            for (int i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * idx[i] / (n - 1);
            sup = std::max(sup, std::sqrt(metric_at(m, {box.chart_id, x}).determinant()));
            int k = 0;
            while (k < d && ++idx[k] == n) idx[k++] = 0;
            if (k == d) break;
        }
        box.volume_bound = sup == 1.0 ? 1.0 : 1.05 * sup;
        m.sampling_boxes.push_back(std::move(box));
    }
    return m;
}

ModelParams build_model(const AtlasManifold& m, const ExperimentConfig& cfg) {
    const json& p = cfg.model_params;
    PotentialSpec pot = zero_potential();
    if (p.contains("potential")) {
        std::vector<std::string> diags;
        const auto entry = named_entry(p["potential"], "model.potential", diags);
        if (!entry || !diags.empty()) throw ConfigError(diags.empty() ? "model.potential: invalid" : diags.front());
        pot = make_potential(m, entry->first, entry->second);
    }
    if (cfg.model == "langevin") {
        const double alpha = p.value("alpha", 1.0);
        const double beta = p.value("beta", 1.0);
        if (p.contains("sigma")) return LangevinParams(alpha, beta, p["sigma"].get<double>(), pot);
        return LangevinParams(alpha, beta, pot);
    }
    return FldParams(p.value("sigma", 1.0), pot);
}

std::vector<std::string> validate_config(const json& config) {
    std::vector<std::string> diags;
    if (!config.is_object()) return {"configuration: expected a JSON object"};
    for (const auto& [key, value] : config.items()) {
        if (!kTopLevelKeys.count(key)) diags.push_back("unknown top-level key '" + key + "'");
    }

    if (!config.contains("manifold")) {
        diags.push_back("manifold: missing");
    } else {
        validate_manifold(config["manifold"], diags);
    }

    std::string model_kind;
    if (!config.contains("model") || !config["model"].is_object()) {
        diags.push_back("model: missing or not an object");
    } else {
        const json& model = config["model"];
        const bool lang = model.contains("langevin");
        const bool fld = model.contains("fld");
        if (lang == fld || model.size() != 1) {
            diags.push_back("model: exactly one of \"langevin\" or \"fld\" is required");
        } else {
            model_kind = lang ? "langevin" : "fld";
            const json& body = model[model_kind];
            if (!body.is_object()) {
                diags.push_back("model." + model_kind + ": expected an object");
            } else {
                const std::set<std::string> allowed = lang ? std::set<std::string>{"alpha", "beta", "sigma", "potential"}
                                                           : std::set<std::string>{"sigma", "potential"};
                for (const auto& [key, value] : body.items()) {
                    if (!allowed.count(key)) diags.push_back("model." + model_kind + ": unknown key '" + key + "'");
                    else if (key != "potential" && !is_number(value)) diags.push_back("model." + model_kind + "." + key + ": expected a number");
                }
                if (body.contains("potential")) {
                    const auto entry = named_entry(body["potential"], "model." + model_kind + ".potential", diags);
                    if (entry && !potential_known(entry->first)) {
                        diags.push_back("model." + model_kind + ".potential: unknown potential '" + entry->first +
                                        "' (zero, quadratic, sin_x1, cos_x2, linear, height)");
                    }
                }
            }
        }
    }

    if (config.contains("integrator")) {
        const json& in = config["integrator"];
        if (!in.is_object()) {
            diags.push_back("integrator: expected an object");
        } else {
            for (const auto& [key, value] : in.items()) {
                if (key == "scheme") {
                    if (!value.is_string() || (value != "strang" && value != "strang_baoab_like" && value != "euler_heun")) {
                        diags.push_back("integrator.scheme: expected \"strang\" or \"euler_heun\"");
                    }
                } else if (key == "record_stride" || key == "seed") {
                    if (!value.is_number_integer() || value.get<long long>() < (key == "seed" ? 0 : 1)) {
                        diags.push_back("integrator." + key + ": expected an integer >= " + (key == "seed" ? "0" : "1"));
                    }
                } else if (key == "dt" || key == "t_final") {
                    if (!is_number(value)) diags.push_back("integrator." + key + ": expected a number");
                } else {
                    diags.push_back("integrator: unknown key '" + key + "'");
                }
            }
        }
    }

    std::string experiment;
    if (!config.contains("experiment") || !config["experiment"].is_string()) {
        diags.push_back("experiment: missing or not a string");
    } else {
        experiment = config["experiment"];
        const auto& names = experiment_names();
        if (std::find(names.begin(), names.end(), experiment) == names.end()) {
            diags.push_back("experiment: unknown experiment '" + experiment + "'");
            experiment.clear();
        }
    }

    std::size_t n_observables = 0;
    if (config.contains("observables")) {
        const json& obs = config["observables"];
        if (!obs.is_array()) {
            diags.push_back("observables: expected an array");
        } else {
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const auto entry = named_entry(obs[i], "observables[" + std::to_string(i) + "]", diags);
                if (entry && !observable_known(entry->first)) {
                    diags.push_back("observables[" + std::to_string(i) + "]: unknown observable '" + entry->first + "'");
                }
                ++n_observables;
            }
        }
    }
    if (config.contains("output_dir") && !config["output_dir"].is_string()) diags.push_back("output_dir: expected a string");
    if (config.contains("settings") && !config["settings"].is_object()) diags.push_back("settings: expected an object");

    if (!diags.empty()) return diags;

    // Semantic checks that need the objects themselves.
    try {
        ExperimentConfig cfg;
        cfg.manifold = config["manifold"]["name"];
        cfg.manifold_params = config["manifold"];
        cfg.model = model_kind;
        cfg.model_params = config["model"][model_kind];
        const AtlasManifold m = build_manifold(cfg);
        const ModelParams model = build_model(m, cfg);
        if (config.contains("integrator")) {
            IntegratorConfig ic;
            ic.dt = config["integrator"].value("dt", ic.dt);
            ic.t_final = config["integrator"].value("t_final", ic.t_final);
            ic.record_stride = config["integrator"].value("record_stride", ic.record_stride);
            ic.validate();
        }
        if (config.contains("observables")) {
            for (const auto& o : config["observables"]) {
                std::vector<std::string> ignored;
                const auto entry = named_entry(o, "observable", ignored);
                make_observable(m, {entry->first, entry->second});
            }
        }
        const bool samplable = m.compact() || !m.sampling_boxes.empty();
        const json settings = config.value("settings", json::object());
        if (experiment == "fld_layout" && model_kind != "fld") diags.push_back("fld_layout: requires the fld model");
        if ((experiment == "decay_fit" || experiment == "time_average" || experiment == "stationary_test") &&
            n_observables == 0) {
            diags.push_back(experiment + ": at least one observable is required");
        }
        if ((experiment == "decay_fit" || experiment == "time_average" || experiment == "stationary_test") && !samplable) {
            diags.push_back(experiment + ": needs a compact manifold or a manifold.sampling_box to sample the invariant measure");
        }
        if (experiment == "rate_constants") {
            if (!m.compact() && !settings.contains("lambda")) {
                diags.push_back("rate_constants: non-compact base; settings.lambda (Poincare constant) is required");
            }
            if (!settings.contains("c2") && !(settings.value("estimate_c2", false) && m.compact())) {
                diags.push_back("rate_constants: settings.c2 is required (or settings.estimate_c2 on a compact base)");
            }
            if (model_kind == "fld" && m.dimension < 2) diags.push_back("rate_constants: fld needs dimension >= 2");
        }
        if (experiment == "operator_check" && model_kind == "fld" && m.dimension < 2) {
            diags.push_back("operator_check: fld needs dimension >= 2");
        }
        if ((experiment == "simulate" || experiment == "fld_layout") && !samplable && !settings.contains("initial")) {
            diags.push_back(experiment + ": settings.initial is required when the invariant measure cannot be sampled");
        }
        (void)model;
    } catch (const ConfigError& e) {
        diags.push_back(e.what());
    } catch (const InvalidParameter& e) {
        diags.push_back(e.what());
    } catch (const Error& e) {
        diags.push_back(e.what());
    } catch (const json::exception& e) {
        diags.push_back(std::string("type error: ") + e.what());
    }
    return diags;
}

ExperimentConfig parse_config(const json& config) {
    const auto diags = validate_config(config);
    if (!diags.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& d : diags) msg += "\n  " + d;
        throw ConfigError(msg);
    }
    ExperimentConfig cfg;
    cfg.raw = config;
    cfg.manifold = config["manifold"]["name"];
    cfg.manifold_params = config["manifold"];
    cfg.model = config["model"].contains("langevin") ? "langevin" : "fld";
    cfg.model_params = config["model"][cfg.model];
    if (config.contains("integrator")) {
        const json& in = config["integrator"];
        cfg.integrator.dt = in.value("dt", cfg.integrator.dt);
        cfg.integrator.t_final = in.value("t_final", cfg.integrator.t_final);
        cfg.integrator.record_stride = in.value("record_stride", cfg.integrator.record_stride);
        cfg.integrator.seed = in.value("seed", std::uint64_t{0});
        cfg.integrator.scheme = parse_scheme(in.value("scheme", std::string("strang")));
    }
    cfg.experiment = config["experiment"];
    if (config.contains("observables")) {
        for (const auto& o : config["observables"]) {
            std::vector<std::string> ignored;
            const auto entry = named_entry(o, "observable", ignored);
            cfg.observables.push_back({entry->first, entry->second});
        }
    }
    cfg.output_dir = config.value("output_dir", std::string("out"));
    cfg.settings = config.value("settings", json::object());
    return cfg;
}

std::string config_hash(const json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// JSON cannot carry NaN or infinities; they are written as null.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

struct Context {
    const ExperimentConfig& cfg;
    const AtlasManifold& m;
    const ModelParams& model;
    const BundleMeasureSpec& spec;
    std::filesystem::path out;
    std::vector<CheckResult> checks;
    json results = json::object();

    void check(const std::string& name, double value, double tolerance, bool passed) {
        checks.push_back({name, value, tolerance, passed});
    }
    void check_below(const std::string& name, double value, double tolerance) {
        check(name, value, tolerance, std::isfinite(value) && value <= tolerance);
    }
    std::ofstream open(const std::string& file) const {
        std::ofstream os(out / file);
        if (!os) throw Error("cannot write " + (out / file).string());
        return os;
    }
    bool is_fld() const { return std::holds_alternative<FldParams>(model); }
    std::size_t count(const std::string& key, std::size_t fallback) const {
        return setting<std::size_t>(cfg.settings, key, fallback);
    }
};

// Random states for pointwise checks: base from the sampling boxes when
// declared, else standard normal coordinates; velocity from the g-frame.
std::vector<TangentState> random_states(const AtlasManifold& m, std::size_t n, RandomStream& rng, bool unit) {
    std::vector<TangentState> out;
    for (std::size_t i = 0; i < n; ++i) {
        ChartPoint p;
        if (!m.sampling_boxes.empty()) {
            p = sample_base(m, zero_potential(), rng);
        } else {
            p = {m.charts.front().chart_id, rng.gaussian_vec(m.dimension)};
        }
        Vec v = orthonormal_frame_at(m, p) * rng.gaussian_vec(m.dimension);
        if (unit) v /= norm_g(metric_at(m, p), v);
        out.push_back({p.chart_id, p.coords, v});
    }
    return out;
}

std::vector<TangentState> initial_states(Context& ctx, std::size_t n, RandomStream& rng) {
    const json& s = ctx.cfg.settings;
    if (s.contains("initial")) {
        const json& init = s["initial"];
        const auto x = init.at("x").get<std::vector<double>>();
        const auto v = init.at("v").get<std::vector<double>>();
        const int d = ctx.m.dimension;
        if (static_cast<int>(x.size()) != d || static_cast<int>(v.size()) != d) {
            throw ConfigError("settings.initial: x and v need " + std::to_string(d) + " components");
        }
        TangentState st{init.value("chart_id", ctx.m.charts.front().chart_id),
                        Eigen::Map<const Eigen::VectorXd>(x.data(), d), Eigen::Map<const Eigen::VectorXd>(v.data(), d)};
        if (ctx.is_fld()) st = normalize_velocity(ctx.m, st);
        return std::vector<TangentState>(n, st);
    }
    return sample_mu(ctx.m, ctx.spec, n, rng);
}

std::vector<BundleFunction> observables(const Context& ctx) {
    std::vector<BundleFunction> out;
    for (const auto& o : ctx.cfg.observables) out.push_back(make_observable(ctx.m, o));
    return out;
}

double unit_speed_drift(const AtlasManifold& m, const std::vector<TangentState>& states) {
    double worst = 0.0;
    for (const auto& s : states) worst = std::max(worst, std::abs(norm_g(metric_at(m, s.point()), s.v) - 1.0));
    return worst;
}

void run_simulate(Context& ctx) {
    const std::size_t n_traj = ctx.count("n_traj", 1);
    RandomStream init_rng(ctx.cfg.integrator.seed, std::numeric_limits<std::uint64_t>::max());
    const auto inits = initial_states(ctx, n_traj, init_rng);
    const auto trajs = simulate_ensemble(ctx.m, inits, ctx.model, ctx.cfg.integrator);
    std::size_t non_finite = 0;
    double drift = 0.0;
    auto switches = ctx.open("chart_switches.csv");
    switches << "trajectory,t,from_chart,to_chart\n";
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "trajectory_%03zu.csv", i);
        auto os = ctx.open(name);
        write_trajectory_csv(os, trajs[i]);
        for (const auto& e : trajs[i].chart_switch_events) {
            switches << i << ',' << number(e.time) << ',' << e.from_chart << ',' << e.to_chart << '\n';
        }
        for (const auto& s : trajs[i].states) {
            if (!s.x.allFinite() || !s.v.allFinite()) ++non_finite;
        }
        if (ctx.is_fld()) drift = std::max(drift, unit_speed_drift(ctx.m, trajs[i].states));
    }
    ctx.check_below("non_finite_states", static_cast<double>(non_finite), 0.0);
    if (ctx.is_fld()) ctx.check_below("unit_speed_drift", drift, 1e-8);
}

void run_fld_layout(Context& ctx) {
    const std::size_t n_traj = ctx.count("n_traj", 1);
    RandomStream init_rng(ctx.cfg.integrator.seed, std::numeric_limits<std::uint64_t>::max());
    const auto inits = initial_states(ctx, n_traj, init_rng);
    const auto trajs = simulate_ensemble(ctx.m, inits, ctx.model, ctx.cfg.integrator);
    auto os = ctx.open("laydown.csv");
    const int d = ctx.m.dimension;
    const bool embedded = static_cast<bool>(ctx.m.charts.front().embedding);
    const int e = embedded ? static_cast<int>(ctx.m.charts.front().embedding(Vec::Zero(d)).size()) : 0;
    os << "trajectory,t,chart_id";
    for (int i = 1; i <= d; ++i) os << ",x" << i;
    for (int i = 1; i <= e; ++i) os << ",y" << i;
    os << '\n';
    double drift = 0.0;
    json lengths = json::array();
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        const Trajectory& tr = trajs[k];
        for (std::size_t r = 0; r < tr.states.size(); ++r) {
            const TangentState& s = tr.states[r];
            os << k << ',' << number(tr.times[r]) << ',' << s.chart_id;
            for (int i = 0; i < d; ++i) os << ',' << number(s.x[i]);
            if (embedded) {
                const Eigen::VectorXd y = ctx.m.chart(s.chart_id).embedding(s.x);
                for (int i = 0; i < e; ++i) os << ',' << number(y[i]);
            }
            os << '\n';
        }
        drift = std::max(drift, unit_speed_drift(ctx.m, tr.states));
        lengths.push_back(base_arclength(ctx.m, tr));
    }
    ctx.results["arclength"] = lengths;
    ctx.results["t_final"] = ctx.cfg.integrator.t_final;
    ctx.check_below("unit_speed_drift", drift, 1e-8);
}

void run_stationary(Context& ctx) {
    const std::size_t n_samples = ctx.count("n_samples", 100000);
    const std::size_t n_chains = std::max<std::size_t>(1, ctx.count("n_chains", 1));
    const double burn_in = setting(ctx.cfg.settings, "burn_in", 10.0);
    const int stride = setting(ctx.cfg.settings, "sample_stride", 1);
    const int batches = setting(ctx.cfg.settings, "batches", 20);
    const IntegratorConfig& base = ctx.cfg.integrator;
    const auto burn_steps = static_cast<std::size_t>(std::llround(burn_in / base.dt));
    const std::size_t per_chain = (n_samples + n_chains - 1) / n_chains;

    IntegratorConfig run = base;
    run.record_stride = stride;
    run.t_final = static_cast<double>(burn_steps + per_chain * static_cast<std::size_t>(stride)) * base.dt;
    RandomStream init_rng(base.seed, std::numeric_limits<std::uint64_t>::max());
    const auto inits = initial_states(ctx, n_chains, init_rng);
    std::vector<std::vector<TangentState>> kept(n_chains);
    run_ensemble(ctx.m, inits, ctx.model, run, [&](std::size_t i, std::size_t r, double, const TangentState& s) {
        const std::size_t step = r * static_cast<std::size_t>(stride);
        if (step > burn_steps && kept[i].size() < per_chain) kept[i].push_back(s);
    });
    std::vector<TangentState> samples;
    for (auto& chain : kept) samples.insert(samples.end(), chain.begin(), chain.end());
    {
        auto os = ctx.open("samples.csv");
        write_states_csv(os, samples);
    }
    const auto funcs = observables(ctx);
    json rows = json::array();
    for (std::size_t k = 0; k < funcs.size(); ++k) {
        std::vector<double> vals(samples.size()), ones(samples.size(), 1.0);
        for (std::size_t i = 0; i < samples.size(); ++i) vals[i] = funcs[k](samples[i]);
        const Estimate expected = integrate_mu(ctx.m, ctx.spec, funcs[k]);
        // batch means over the chain-major sample order
        const std::size_t n = vals.size();
        const std::size_t size = n / static_cast<std::size_t>(batches);
        std::vector<double> means;
        for (int b = 0; b < batches; ++b) {
            const std::size_t lo = static_cast<std::size_t>(b) * size;
            const std::size_t hi = b + 1 == batches ? n : lo + size;
            means.push_back(kernels::dot(std::span(vals).subspan(lo, hi - lo), std::span(ones).subspan(lo, hi - lo)) /
                            static_cast<double>(hi - lo));
        }
        const double mean = kernels::dot(vals, ones) / static_cast<double>(n);
        const kernels::Moments dev = kernels::centered_moments(means, mean);
        const double se = std::sqrt(dev.sum_sq / (batches - 1.0) / batches);
        const double z = std::abs(mean - expected.value) / std::max(se + expected.error, 1e-300);
        const std::string& name = ctx.cfg.observables[k].name;
        rows.push_back({{"observable", name}, {"sample_mean", num(mean)}, {"stderr", num(se)},
                        {"expected", num(expected.value)}, {"quadrature_error", num(expected.error)}, {"z", num(z)}});
        ctx.check_below("stationary_" + name + "_z", z, 3.0);
    }
    ctx.results["stationary"] = rows;
    ctx.results["n_samples"] = samples.size();
    auto os = ctx.open("stationary.json");
    os << rows.dump(2) << '\n';
}

DecayCurve decay_curve(Context& ctx, const BundleFunction& g, const std::string& times_key, const std::string& n_key,
                       std::size_t default_n) {
    const auto ts = setting_list(ctx.cfg.settings, times_key, {0.5, 1.0, 2.0, 4.0, 8.0});
    return semigroup_decay(ctx.m, ctx.spec, ctx.model, g, ts, ctx.count(n_key, default_n), ctx.cfg.integrator,
                           setting(ctx.cfg.settings, "batches", 20));
}

void write_decay(const Context& ctx, const DecayCurve& curve) {
    auto os = ctx.open("decay.csv");
    os << "t,value,stderr\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        os << number(curve.times[k]) << ',' << number(curve.values[k]) << ',' << number(curve.stderr_[k]) << '\n';
    }
}

json fit_json(const RateFit& fit) {
    return {{"kappa2_hat", num(fit.kappa2_hat)},
            {"log_prefactor", num(fit.log_prefactor)},
            {"r_squared", num(fit.r_squared)},
            {"slope_stderr", num(fit.slope_stderr)},
            {"fit_window", fit.fit_window}};
}

void run_decay_fit(Context& ctx) {
    const BundleFunction g = make_observable(ctx.m, ctx.cfg.observables.front());
    const DecayCurve curve = decay_curve(ctx, g, "times", "n_traj", 10000);
    write_decay(ctx, curve);
    const double min_r2 = setting(ctx.cfg.settings, "min_r2", 0.9);
    try {
        const RateFit fit = fit_exponential_rate(curve);
        ctx.results["fit"] = fit_json(fit);
        ctx.check("kappa2_hat_positive", fit.kappa2_hat, 0.0, fit.kappa2_hat > 0.0);
        ctx.check("r_squared", fit.r_squared, min_r2, fit.r_squared > min_r2);
    } catch (const InsufficientSignal& e) {
        ctx.results["fit_error"] = e.what();
        ctx.check("kappa2_hat_positive", std::nan(""), 0.0, false);
    }
    auto os = ctx.open("fit.json");
    os << ctx.results.dump(2) << '\n';
}

void run_time_average(Context& ctx) {
    const BundleFunction f = make_observable(ctx.m, ctx.cfg.observables.front());
    RateBundle rates;
    if (ctx.cfg.settings.contains("rates")) {
        rates.kappa1 = ctx.cfg.settings["rates"].at("kappa1").get<double>();
        rates.kappa2 = ctx.cfg.settings["rates"].at("kappa2").get<double>();
        ctx.results["rates_source"] = "settings";
    } else {
        const DecayCurve curve = decay_curve(ctx, f, "decay_times", "decay_n_traj", 10000);
        write_decay(ctx, curve);
        RateFit fit;
        try {
            fit = fit_exponential_rate(curve);
        } catch (const InsufficientSignal& e) {
            ctx.results["fit_error"] = e.what();
            ctx.check("kappa2_hat_positive", std::nan(""), 0.0, false);
            return;
        }
        // C(t) <= kappa1 e^{-kappa2 t} C(0): prefactor relative to the variance.
        rates.kappa2 = fit.kappa2_hat;
        rates.kappa1 = std::max(1.0, std::exp(fit.log_prefactor) / curve.values.front());
        ctx.results["fit"] = fit_json(fit);
        ctx.results["rates_source"] = "fitted";
    }
    ctx.results["kappa1"] = num(rates.kappa1);
    ctx.results["kappa2"] = num(rates.kappa2);
    const auto t_grid = setting_list(ctx.cfg.settings, "t_grid", {4.0, 16.0, 64.0});
    const TimeAverageReport report = time_average_check(ctx.m, ctx.spec, ctx.model, f, t_grid,
                                                        ctx.count("n_traj", 2000), rates, ctx.cfg.integrator);
    auto os = ctx.open("time_average.csv");
    os << "t,lhs,lhs_stderr,rhs\n";
    json rows = json::array();
    for (const auto& row : report.rows) {
        os << number(row.t) << ',' << number(row.lhs) << ',' << number(row.lhs_stderr) << ',' << number(row.rhs) << '\n';
        rows.push_back({{"t", row.t}, {"lhs", num(row.lhs)}, {"lhs_stderr", num(row.lhs_stderr)}, {"rhs", num(row.rhs)},
                        {"violated", row.violated}});
        ctx.check("bound_t_" + number(row.t), row.lhs - 2.0 * row.lhs_stderr, row.rhs, !row.violated);
    }
    ctx.results["time_average"] = rows;
    ctx.results["f_norm"] = num(report.f_norm);
    ctx.results["loglog_slope"] = num(report.loglog_slope);
    if (setting(ctx.cfg.settings, "check_slope", true) && report.rows.size() >= 2) {
        const auto window = setting_list(ctx.cfg.settings, "slope_window", {-0.6, -0.4});
        ctx.check("loglog_slope", report.loglog_slope, window.at(0),
                  report.loglog_slope >= window.at(0) && report.loglog_slope <= window.at(1));
    }
}

void run_geometry_check(Context& ctx) {
    RandomStream rng(ctx.cfg.integrator.seed, 0);
    const std::size_t n = ctx.count("n_states", 1000);
    const auto states = random_states(ctx.m, n, rng, false);
    double liouville = 0.0;
    for (const auto& s : states) liouville = std::max(liouville, std::abs(spray_divergence_fd(ctx.m, s)));
    ctx.results["liouville_residual"] = num(liouville);
    ctx.check_below("liouville_residual", liouville, 1e-5);

    const int d = ctx.m.dimension;
    if (d >= 2) {
        const auto units = random_states(ctx.m, n, rng, true);
        double eig = 0.0;
        for (const auto& s : units) {
            const Mat g = metric_at(ctx.m, s.point());
            const Vec z = orthonormal_frame_at(ctx.m, s.point()) * rng.gaussian_vec(d);
            const FibreFunction f = [&](const Vec& w) { return w.dot(g * z); };
            eig = std::max(eig, std::abs(spherical_laplacian_fd(ctx.m, s, f) + (d - 1) * f(s.v)));
        }
        ctx.results["eigenrelation_residual"] = num(eig);
        ctx.check_below("eigenrelation_residual", eig, 1e-3);
    }
    if (ctx.m.name == "sphere2") {
        // Great circle through both charts returns to its start after 2 pi.
        const ChartPoint start = sphere2_chart_point(Eigen::Vector3d(1.0, 0.0, 0.0));
        const Eigen::Vector3d y0(1.0, 0.0, 0.0);
        const Eigen::Vector3d tangent(0.0, 0.6, 0.8);
        // Chart velocity with embedded image `tangent`, by least squares on the push-forward.
        Mat J(3, 2);
        for (int i = 0; i < 2; ++i) J.col(i) = sphere2_push_velocity(start, Vec::Unit(2, i));
        const Vec v = J.colPivHouseholderQr().solve(tangent);
        ChartPoint p = start;
        Vec vel = v;
        const double dt = 1e-3;
        const auto steps = static_cast<std::size_t>(std::llround(2.0 * std::numbers::pi / dt));
        const double h = 2.0 * std::numbers::pi / static_cast<double>(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            GeodesicStepResult r = geodesic_step(ctx.m, p, vel, h);
            p = r.point;
            vel = r.velocity;
        }
        const double closure = (sphere2_embed(p) - y0).norm();
        ctx.results["geodesic_closure"] = num(closure);
        ctx.check_below("geodesic_closure", closure, 1e-6);
    }
}

void run_operator_check(Context& ctx) {
    RandomStream rng(ctx.cfg.integrator.seed, 0);
    const std::size_t n = ctx.count("n_points", 10);
    const int d = ctx.m.dimension;
    const auto funcs = observables(ctx);
    const BundleFunction first = funcs.empty() ? make_observable(ctx.m, {"cos_x1", {}}) : funcs.front();
    const BundleFunction second = funcs.size() > 1 ? funcs[1] : first;
    // Base functions read the observables at zero velocity.
    const ScalarField f0 = [&](const ChartPoint& p) { return first(TangentState{p.chart_id, p.coords, Vec::Zero(d)}); };
    const ScalarField g0 = [&](const ChartPoint& p) { return second(TangentState{p.chart_id, p.coords, Vec::Zero(d)}); };
    const auto states = random_states(ctx.m, n, rng, ctx.is_fld());

    double gen_one = 0.0, pap = 0.0, pa2p = 0.0;
    const BundleFunction one = [](const TangentState&) { return 1.0; };
    for (const auto& s : states) {
        gen_one = std::max(gen_one, std::abs(apply_generator_fd(ctx.m, ctx.model, one, s)));
        const Vec z = rng.gaussian_vec(d);
        const AtlasManifold& m = ctx.m;
        const BundleFunction f = [&, z](const TangentState& t) {
            const double c = t.v.dot(metric_at(m, t.point()) * z);
            return f0(t.point()) * (1.0 + c + c * c);
        };
        pap = std::max(pap, check_pap_zero(ctx.m, ctx.spec, f, s.point()));
        const Pa2pReport r = check_pa2p(ctx.m, ctx.spec, ctx.model, f0, s.point());
        pa2p = std::max(pa2p, std::abs(r.lhs - r.rhs) / std::max(std::abs(r.rhs), 1e-3));
    }
    ctx.results["generator_of_one"] = num(gen_one);
    ctx.results["pap_residual"] = num(pap);
    ctx.results["pa2p_error"] = num(pa2p);
    ctx.check_below("generator_of_one", gen_one, 1e-12);
    ctx.check_below("pap_residual", pap, ctx.spec.fibre == FibreKind::gaussian ? 1e-8 : 1e-6);
    ctx.check_below("pa2p_error", pa2p, 1e-3);
    if (ctx.m.compact()) {
        const IbpReport ibp = check_ibp(ctx.m, ctx.spec, f0, g0, setting(ctx.cfg.settings, "ibp_grid", 128));
        ctx.results["ibp"] = {{"laplacian_term", num(ibp.laplacian_term)},
                              {"gradient_term", num(ibp.gradient_term)},
                              {"residual", num(ibp.residual)}};
        ctx.check_below("ibp_residual", ibp.residual, 1e-6);
    }
}

std::vector<BundleFunction> c2_family(const AtlasManifold& m) {
    const int d = m.dimension;
    std::vector<ScalarField> bases = {
        [](const ChartPoint& p) { return std::cos(p.coords[0]); },
        [](const ChartPoint& p) { return std::sin(p.coords[0]); },
        [d](const ChartPoint& p) { return std::cos(p.coords[d - 1]); },
        [d](const ChartPoint& p) { return std::sin(p.coords[d - 1]); },
        [](const ChartPoint&) { return 1.0; },
    };
    std::vector<BundleFunction> out;
    for (const auto& b : bases) {
        for (int kind = 0; kind < 4; ++kind) {
            out.push_back([&m, b, kind, d](const TangentState& s) {
                const Vec gv = metric_at(m, s.point()) * s.v;
                double fibre = 0.0;
                switch (kind) {
                case 0: fibre = gv[0]; break;
                case 1: fibre = gv[d - 1]; break;
                case 2: fibre = s.v[0] * s.v[0]; break;
                default: fibre = s.v[0] * s.v[d - 1]; break;
                }
                return b(s.point()) * fibre;
            });
        }
    }
    return out;
}

void run_rate_constants(Context& ctx) {
    const int d = ctx.m.dimension;
    const json& s = ctx.cfg.settings;
    double lambda = 0.0;
    if (s.contains("lambda")) {
        lambda = s["lambda"].get<double>();
        ctx.results["lambda_source"] = "settings";
    } else {
        lambda = estimate_poincare(ctx.m, ctx.spec.base_potential, setting(s, "grid_n", 64));
        ctx.results["lambda_source"] = "finite_volume_estimate";
    }
    DmsConstants k;
    k.lambda_m = microscopic_constant(ctx.model, d);
    k.lambda_M = macroscopic_constant(lambda, ctx.model, d);
    k.c1 = c1_constant(ctx.model, d);
    if (s.contains("c2")) {
        k.c2 = s["c2"].get<double>();
        ctx.results["c2_source"] = "settings";
    } else {
        k.c2 = estimate_c2(ctx.m, ctx.spec, ctx.model, c2_family(ctx.m), setting(s, "c2_grid_n", 16));
        ctx.results["c2_source"] = "empirical_lower_bound_witness";
    }
    const RateBundle r = dms_rate(k);
    ctx.results["lambda"] = num(lambda);
    ctx.results["lambda_m"] = num(k.lambda_m);
    ctx.results["lambda_M"] = num(k.lambda_M);
    ctx.results["c1"] = num(k.c1);
    ctx.results["c2"] = num(k.c2);
    ctx.results["kappa1"] = num(r.kappa1);
    ctx.results["kappa2"] = num(r.kappa2);
    ctx.results["epsilon"] = num(r.epsilon);
    ctx.check("kappa2_positive", r.kappa2, 0.0, r.kappa2 > 0.0);
    ctx.check("kappa1_at_least_one", r.kappa1, 1.0, r.kappa1 >= 1.0);
    auto os = ctx.open("rates.json");
    os << ctx.results.dump(2) << '\n';
}

} // namespace

int run_experiment(ExperimentConfig cfg, std::optional<std::uint64_t> seed_override,
                   std::optional<std::string> out_override, std::ostream& log) {
    if (seed_override) cfg.integrator.seed = *seed_override;
    if (out_override) cfg.output_dir = *out_override;
    const auto started = std::chrono::steady_clock::now();
    const AtlasManifold m = build_manifold(cfg);
    const ModelParams model = build_model(m, cfg);
    const BundleMeasureSpec spec = bundle_measure(m, model);

    std::filesystem::create_directories(cfg.output_dir);
    Context ctx{cfg, m, model, spec, cfg.output_dir, {}, json::object()};
    std::string failure;
    try {
        const std::string& e = cfg.experiment;
        if (e == "simulate") run_simulate(ctx);
        else if (e == "stationary_test") run_stationary(ctx);
        else if (e == "decay_fit") run_decay_fit(ctx);
        else if (e == "time_average") run_time_average(ctx);
        else if (e == "geometry_check") run_geometry_check(ctx);
        else if (e == "operator_check") run_operator_check(ctx);
        else if (e == "rate_constants") run_rate_constants(ctx);
        else if (e == "fld_layout") run_fld_layout(ctx);
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("settings: ") + e.what());
    } catch (const std::exception& e) {
        failure = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    bool ok = failure.empty();
    json checks = json::array();
    for (const auto& c : ctx.checks) {
        ok = ok && c.passed;
        checks.push_back({{"name", c.name}, {"value", num(c.value)}, {"tolerance", num(c.tolerance)}, {"passed", c.passed}});
        log << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << number(c.value)
            << " tolerance=" << number(c.tolerance) << '\n';
    }
    if (!failure.empty()) log << "FAIL " << cfg.experiment << ": " << failure << '\n';

    json manifest = {{"config_hash", config_hash(cfg.raw)},
                     {"seed", cfg.integrator.seed},
                     {"version", kVersion},
                     {"experiment", cfg.experiment},
                     {"simd", std::string(kernels::isa_name(kernels::active_isa()))},
                     {"workers", worker_count()},
                     {"wall_time_s", wall},
                     {"checks", checks},
                     {"results", ctx.results},
                     {"passed", ok}};
    if (!failure.empty()) manifest["error"] = failure;
    std::ofstream os(std::filesystem::path(cfg.output_dir) / "manifest.json");
    os << manifest.dump(2) << '\n';
    return ok ? kSuccess : kCheckFailure;
}

} // namespace geolangevin::cli
