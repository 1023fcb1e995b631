#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "geolangevin/bundle.hpp"
#include "geolangevin/errors.hpp"
#include "geolangevin/potential.hpp"
#include "geolangevin/rng.hpp"

namespace geolangevin {

/// Geometric Langevin model on TM. sigma is tied to sqrt(2 alpha / beta).
struct LangevinParams {
    double alpha = 1.0;
    double beta = 1.0;
    double sigma = std::sqrt(2.0);
    PotentialSpec potential = zero_potential();

    LangevinParams() = default;
    LangevinParams(double alpha, double beta, PotentialSpec potential);
    /// Explicit sigma; throws InvalidParameter unless |sigma - sqrt(2 alpha / beta)| < 1e-12.
    LangevinParams(double alpha, double beta, double sigma, PotentialSpec potential);
};

/// Fibre lay-down model on UTM.
struct FldParams {
    double sigma = 1.0;
    PotentialSpec potential = zero_potential();

    FldParams() = default;
    FldParams(double sigma, PotentialSpec potential);
};

using ModelParams = std::variant<LangevinParams, FldParams>;

enum class Scheme { strang_baoab_like, euler_heun };

struct IntegratorConfig {
    double dt = 1e-2;
    double t_final = 1.0;
    int record_stride = 1;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::strang_baoab_like;

    /// Number of steps, round(t_final / dt).
    std::size_t steps() const;
    void validate() const;
};

struct ChartSwitchEvent {
    double time = 0.0;
    int from_chart = 0;
    int to_chart = 0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<TangentState> states;
    std::vector<ChartSwitchEvent> chart_switch_events;
};

/// Aggregated per-trajectory failures of an ensemble run.
class EnsembleError : public Error {
public:
    struct Failure {
        std::size_t index;
        std::string message;
    };
    explicit EnsembleError(std::vector<Failure> failures);
    const std::vector<Failure>& failures() const { return failures_; }

private:
    std::vector<Failure> failures_;
};

/// Strang splitting O(dt/2) B(dt/2) A(dt) B(dt/2) O(dt/2). The O step is the exact
/// Ornstein-Uhlenbeck update in the g-orthonormal frame; A is geodesic_step.
TangentState langevin_step(const AtlasManifold& m, const TangentState& s, const LangevinParams& params, double dt,
                           RandomStream& rng, std::vector<ChartSwitch>* switches = nullptr);

/// Half geodesic step, projected Euler-Maruyama fibre update with
/// renormalization to |v|_g = 1, half geodesic step.
TangentState fld_step(const AtlasManifold& m, const TangentState& s, const FldParams& params, double dt,
                      RandomStream& rng, std::vector<ChartSwitch>* switches = nullptr);

/// Stratonovich Euler-Heun predictor-corrector in the current chart.
TangentState langevin_step_heun(const AtlasManifold& m, const TangentState& s, const LangevinParams& params,
                                double dt, RandomStream& rng, std::vector<ChartSwitch>* switches = nullptr);
TangentState fld_step_heun(const AtlasManifold& m, const TangentState& s, const FldParams& params, double dt,
                           RandomStream& rng, std::vector<ChartSwitch>* switches = nullptr);

/// Dispatches on model type and cfg.scheme.
TangentState model_step(const AtlasManifold& m, const TangentState& s, const ModelParams& model,
                        const IntegratorConfig& cfg, RandomStream& rng, std::vector<ChartSwitch>* switches = nullptr);

/// Rescales v to unit g-norm.
TangentState normalize_velocity(const AtlasManifold& m, const TangentState& s);

Trajectory simulate_trajectory(const AtlasManifold& m, const TangentState& init, const ModelParams& model,
                               const IntegratorConfig& cfg);

/// Called for every recorded state: (trajectory index, record index, time, state).
/// Invoked from worker threads; calls for one trajectory come from one thread.
using EnsembleObserver = std::function<void(std::size_t, std::size_t, double, const TangentState&)>;

/// Worker count from GEOLANGEVIN_WORKERS, else the hardware concurrency.
std::size_t worker_count();

/// Runs every trajectory with stream (cfg.seed, index) without storing paths.
void run_ensemble(const AtlasManifold& m, const std::vector<TangentState>& inits, const ModelParams& model,
                  const IntegratorConfig& cfg, const EnsembleObserver& observer, std::size_t workers = 0);

std::vector<Trajectory> simulate_ensemble(const AtlasManifold& m, const std::vector<TangentState>& inits,
                                          const ModelParams& model, const IntegratorConfig& cfg,
                                          std::size_t workers = 0);

std::vector<ChartPoint> base_path(const Trajectory& traj);

/// Sum of base-curve segment lengths, measured in the metric at segment
/// midpoints; segments across a chart switch use the post-switch chart.
double base_arclength(const AtlasManifold& m, const Trajectory& traj);

/// CSV with header t,chart_id,x1..xd,v1..vd.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
/// CSV with header chart_id,x1..xd,v1..vd.
void write_states_csv(std::ostream& os, const std::vector<TangentState>& states);
/// CSV with header t,chart_id,x1..xd.
void write_base_path_csv(std::ostream& os, const Trajectory& traj);

} // namespace geolangevin
