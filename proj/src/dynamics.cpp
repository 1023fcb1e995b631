#include "geolangevin/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <numbers>
#include <thread>

namespace geolangevin {

namespace {

constexpr double kSigmaTolerance = 1e-12;

void push_switch(std::vector<ChartSwitch>* out, const std::optional<ChartSwitch>& sw) {
    if (out && sw) out->push_back(*sw);
}

TangentState half_geodesic(const AtlasManifold& m, const TangentState& s, double h, std::vector<ChartSwitch>* sw) {
    GeodesicStepResult r = geodesic_step(m, s.point(), s.v, h);
    push_switch(sw, r.chart_switch);
    return {r.point.chart_id, std::move(r.point.coords), std::move(r.velocity)};
}

TangentState settle(const AtlasManifold& m, const TangentState& s, std::vector<ChartSwitch>* sw) {
    GeodesicStepResult r = settle_chart(m, s.point(), s.v);
    push_switch(sw, r.chart_switch);
    return {r.point.chart_id, std::move(r.point.coords), std::move(r.velocity)};
}

Vec project_out(const Mat& g, const Vec& u, const Vec& w) { return w - w.dot(g * u) * u; }

void ou_half_step(const AtlasManifold& m, TangentState& s, const LangevinParams& p, double h, RandomStream& rng) {
    if (p.alpha == 0.0) return;
    const double decay = std::exp(-p.alpha * h);
    const double spread = std::sqrt(-std::expm1(-2.0 * p.alpha * h) / p.beta);
    const Mat L = orthonormal_frame_at(m, s.point());
    const Vec z = rng.gaussian_vec(static_cast<int>(s.v.size()));
    s.v = decay * s.v + spread * (L * z);
}

void kick(const AtlasManifold& m, TangentState& s, const PotentialSpec& pot, double h) {
    if (pot.constant) return;
    s.v -= h * potential_gradient(m, pot, s.point());
}

} // namespace

LangevinParams::LangevinParams(double a, double b, PotentialSpec pot)
    : alpha(a), beta(b), sigma(0.0), potential(std::move(pot)) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidParameter("langevin: alpha must be >= 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidParameter("langevin: beta must be > 0");
    sigma = std::sqrt(2.0 * alpha / beta);
}

LangevinParams::LangevinParams(double a, double b, double s, PotentialSpec pot) : LangevinParams(a, b, std::move(pot)) {
    if (!(std::abs(s - sigma) < kSigmaTolerance)) {
        throw InvalidParameter("langevin: sigma must equal sqrt(2 alpha / beta) = " + std::to_string(sigma));
    }
}

FldParams::FldParams(double s, PotentialSpec pot) : sigma(s), potential(std::move(pot)) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidParameter("fld: sigma must be >= 0");
}

std::size_t IntegratorConfig::steps() const {
    return t_final <= 0.0 ? 0 : static_cast<std::size_t>(std::llround(t_final / dt));
}

void IntegratorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidParameter("integrator: dt must be positive");
    if (!(t_final >= 0.0)) throw InvalidParameter("integrator: t_final must be >= 0");
    if (t_final > 0.0 && !(dt <= t_final)) throw InvalidParameter("integrator: dt must not exceed t_final");
    if (record_stride < 1) throw InvalidParameter("integrator: record_stride must be >= 1");
}

EnsembleError::EnsembleError(std::vector<Failure> failures)
    : Error([&] {
          std::string msg = std::to_string(failures.size()) + " trajectories failed";
          if (!failures.empty()) msg += "; first (#" + std::to_string(failures.front().index) + "): " + failures.front().message;
          return msg;
      }()),
      failures_(std::move(failures)) {}

TangentState normalize_velocity(const AtlasManifold& m, const TangentState& s) {
    const Mat g = metric_at(m, s.point());
    TangentState out = s;
    out.v /= norm_g(g, s.v);
    return out;
}

TangentState langevin_step(const AtlasManifold& m, const TangentState& s, const LangevinParams& p, double dt,
                           RandomStream& rng, std::vector<ChartSwitch>* switches) {
    const double h = 0.5 * dt;
    TangentState cur = s;
    ou_half_step(m, cur, p, h, rng);
    kick(m, cur, p.potential, h);
    cur = half_geodesic(m, cur, dt, switches);
    kick(m, cur, p.potential, h);
    ou_half_step(m, cur, p, h, rng);
    return cur;
}

TangentState fld_step(const AtlasManifold& m, const TangentState& s, const FldParams& p, double dt,
                      RandomStream& rng, std::vector<ChartSwitch>* switches) {
    TangentState cur = half_geodesic(m, s, 0.5 * dt, switches);
    const ChartPoint x = cur.point();
    const Mat g = metric_at(m, x);
    const Vec u = cur.v / norm_g(g, cur.v);
    Vec w = u;
    if (!p.potential.constant) w -= dt * project_out(g, u, potential_gradient(m, p.potential, x));
    if (p.sigma != 0.0) {
        const Mat L = orthonormal_frame_at(m, x);
        const Vec z = rng.gaussian_vec(static_cast<int>(u.size()));
        w += p.sigma * std::sqrt(dt) * project_out(g, u, L * z);
    }
    cur.v = w / norm_g(g, w);
    cur = half_geodesic(m, cur, 0.5 * dt, switches);
    return normalize_velocity(m, cur);
}

TangentState langevin_step_heun(const AtlasManifold& m, const TangentState& s, const LangevinParams& p, double dt,
                                RandomStream& rng, std::vector<ChartSwitch>* switches) {
    const int d = static_cast<int>(s.v.size());
    const Vec dW = std::sqrt(dt) * rng.gaussian_vec(d);
    auto drift_v = [&](const TangentState& t) {
        const Christoffel gamma = christoffel_at(m, t.point());
        Vec a = -gamma.contract(t.v, t.v) - p.alpha * t.v;
        if (!p.potential.constant) a -= potential_gradient(m, p.potential, t.point());
        return a;
    };
    const Mat L0 = orthonormal_frame_at(m, s.point());
    const Vec a0 = drift_v(s);
    TangentState pred{s.chart_id, s.x + dt * s.v, s.v + dt * a0 + p.sigma * (L0 * dW)};
    const Mat L1 = orthonormal_frame_at(m, pred.point());
    const Vec a1 = drift_v(pred);
    TangentState out{s.chart_id, s.x + 0.5 * dt * (s.v + pred.v),
                     s.v + 0.5 * dt * (a0 + a1) + 0.5 * p.sigma * ((L0 + L1) * dW)};
    return settle(m, out, switches);
}

TangentState fld_step_heun(const AtlasManifold& m, const TangentState& s, const FldParams& p, double dt,
                           RandomStream& rng, std::vector<ChartSwitch>* switches) {
    const int d = static_cast<int>(s.v.size());
    const Vec dW = std::sqrt(dt) * rng.gaussian_vec(d);
    struct Coeffs {
        Vec drift;
        Vec noise;
    };
    auto coeffs = [&](const TangentState& t) {
        const ChartPoint x = t.point();
        const Mat g = metric_at(m, x);
        const Christoffel gamma = christoffel_at(m, x);
        Vec a = -gamma.contract(t.v, t.v);
        if (!p.potential.constant) a -= project_out(g, t.v, potential_gradient(m, p.potential, x));
        const Mat L = orthonormal_frame_at(m, x);
        return Coeffs{a, p.sigma * project_out(g, t.v, L * dW)};
    };
    const Coeffs c0 = coeffs(s);
    TangentState pred{s.chart_id, s.x + dt * s.v, s.v + dt * c0.drift + c0.noise};
    const Coeffs c1 = coeffs(pred);
    TangentState out{s.chart_id, s.x + 0.5 * dt * (s.v + pred.v),
                     s.v + 0.5 * dt * (c0.drift + c1.drift) + 0.5 * (c0.noise + c1.noise)};
    out = settle(m, out, switches);
    return normalize_velocity(m, out);
}

TangentState model_step(const AtlasManifold& m, const TangentState& s, const ModelParams& model,
                        const IntegratorConfig& cfg, RandomStream& rng, std::vector<ChartSwitch>* switches) {
    if (const auto* lp = std::get_if<LangevinParams>(&model)) {
        return cfg.scheme == Scheme::euler_heun ? langevin_step_heun(m, s, *lp, cfg.dt, rng, switches)
                                                : langevin_step(m, s, *lp, cfg.dt, rng, switches);
    }
    const auto& fp = std::get<FldParams>(model);
    return cfg.scheme == Scheme::euler_heun ? fld_step_heun(m, s, fp, cfg.dt, rng, switches)
                                            : fld_step(m, s, fp, cfg.dt, rng, switches);
}

namespace {

// Core loop shared by single trajectories and ensembles.
template <typename OnRecord, typename OnSwitch>
void integrate(const AtlasManifold& m, const TangentState& init, const ModelParams& model,
               const IntegratorConfig& cfg, RandomStream& rng, OnRecord&& on_record, OnSwitch&& on_switch) {
    require_valid(m, init.point());
    TangentState s = init;
    if (std::holds_alternative<FldParams>(model)) require_unit(m, s);
    const std::size_t n = cfg.steps();
    std::size_t record = 0;
    on_record(record++, 0.0, s);
    std::vector<ChartSwitch> switches;
    for (std::size_t k = 1; k <= n; ++k) {
        switches.clear();
        s = model_step(m, s, model, cfg, rng, &switches);
        const double t = static_cast<double>(k) * cfg.dt;
        for (const auto& sw : switches) on_switch(t, sw);
        if (k % static_cast<std::size_t>(cfg.record_stride) == 0) on_record(record++, t, s);
    }
}

} // namespace

Trajectory simulate_trajectory(const AtlasManifold& m, const TangentState& init, const ModelParams& model,
                               const IntegratorConfig& cfg) {
    cfg.validate();
    RandomStream rng(cfg.seed, 0);
    Trajectory traj;
    integrate(
        m, init, model, cfg, rng,
        [&](std::size_t, double t, const TangentState& s) {
            traj.times.push_back(t);
            traj.states.push_back(s);
        },
        [&](double t, const ChartSwitch& sw) { traj.chart_switch_events.push_back({t, sw.from_chart, sw.to_chart}); });
    return traj;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("GEOLANGEVIN_WORKERS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void run_ensemble(const AtlasManifold& m, const std::vector<TangentState>& inits, const ModelParams& model,
                  const IntegratorConfig& cfg, const EnsembleObserver& observer, std::size_t workers) {
    cfg.validate();
    if (inits.empty()) throw InvalidParameter("ensemble: no initial states");
    if (workers == 0) workers = worker_count();
    workers = std::min(workers, inits.size());

    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::vector<EnsembleError::Failure> failures;

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= inits.size()) return;
            try {
                RandomStream rng(cfg.seed, i);
                integrate(
                    m, inits[i], model, cfg, rng,
                    [&](std::size_t r, double t, const TangentState& s) { observer(i, r, t, s); },
                    [](double, const ChartSwitch&) {});
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                failures.push_back({i, e.what()});
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
        throw EnsembleError(std::move(failures));
    }
}

std::vector<Trajectory> simulate_ensemble(const AtlasManifold& m, const std::vector<TangentState>& inits,
                                          const ModelParams& model, const IntegratorConfig& cfg,
                                          std::size_t workers) {
    cfg.validate();
    if (inits.empty()) throw InvalidParameter("ensemble: no initial states");
    if (workers == 0) workers = worker_count();
    workers = std::min(workers, inits.size());

    std::vector<Trajectory> out(inits.size());
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::vector<EnsembleError::Failure> failures;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= inits.size()) return;
            try {
                RandomStream rng(cfg.seed, i);
                Trajectory& traj = out[i];
                integrate(
                    m, inits[i], model, cfg, rng,
                    [&](std::size_t, double t, const TangentState& s) {
                        traj.times.push_back(t);
                        traj.states.push_back(s);
                    },
                    [&](double t, const ChartSwitch& sw) {
                        traj.chart_switch_events.push_back({t, sw.from_chart, sw.to_chart});
                    });
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                failures.push_back({i, e.what()});
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
        throw EnsembleError(std::move(failures));
    }
    return out;
}

std::vector<ChartPoint> base_path(const Trajectory& traj) {
    std::vector<ChartPoint> out;
    out.reserve(traj.states.size());
    for (const auto& s : traj.states) out.push_back(s.point());
    return out;
}

double base_arclength(const AtlasManifold& m, const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const TangentState& a = traj.states[k - 1];
        const TangentState& b = traj.states[k];
        Vec from = a.x;
        if (a.chart_id != b.chart_id) from = transition_point(m, a.point(), b.chart_id).coords;
        Vec delta = b.x - from;
        const ChartSpec& c = m.chart(b.chart_id);
        if (c.wrap) {
            // Shortest representative of a difference under 2 pi periodicity.
            for (int i = 0; i < delta.size(); ++i) {
                delta[i] = std::remainder(delta[i], 2.0 * std::numbers::pi);
            }
        }
        const Vec mid = b.x - 0.5 * delta;
        total += norm_g(c.metric(mid), delta);
    }
    return total;
}

namespace {

void write_number(std::ostream& os, double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    os << buf;
}

void write_state_fields(std::ostream& os, const TangentState& s) {
    os << s.chart_id;
    for (int i = 0; i < s.x.size(); ++i) {
        os << ',';
        write_number(os, s.x[i]);
    }
    for (int i = 0; i < s.v.size(); ++i) {
        os << ',';
        write_number(os, s.v[i]);
    }
}

void write_header(std::ostream& os, int d, bool with_time, bool with_velocity) {
    if (with_time) os << "t,";
    os << "chart_id";
    for (int i = 1; i <= d; ++i) os << ",x" << i;
    if (with_velocity) {
        for (int i = 1; i <= d; ++i) os << ",v" << i;
    }
    os << '\n';
}

} // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const int d = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().x.size());
    write_header(os, d, true, true);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        write_number(os, traj.times[k]);
        os << ',';
        write_state_fields(os, traj.states[k]);
        os << '\n';
    }
}

void write_states_csv(std::ostream& os, const std::vector<TangentState>& states) {
    const int d = states.empty() ? 0 : static_cast<int>(states.front().x.size());
    write_header(os, d, false, true);
    for (const auto& s : states) {
        write_state_fields(os, s);
        os << '\n';
    }
}

void write_base_path_csv(std::ostream& os, const Trajectory& traj) {
    const int d = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().x.size());
    write_header(os, d, true, false);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        write_number(os, traj.times[k]);
        os << ',' << traj.states[k].chart_id;
        for (int i = 0; i < d; ++i) {
            os << ',';
            write_number(os, traj.states[k].x[i]);
        }
        os << '\n';
    }
}

} // namespace geolangevin
