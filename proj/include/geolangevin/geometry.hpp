#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "geolangevin/linalg.hpp"

namespace geolangevin {

/// One coordinate chart of an atlas. Optional callables are left empty when absent.
struct ChartSpec {
    int chart_id = 0;
    int dimension = 0;
    std::function<bool(const Vec&)> validity;
    std::function<Mat(const Vec&)> metric;
    std::function<Christoffel(const Vec&)> christoffel;  // optional; FD fallback
    std::function<Vec(const Vec&)> wrap;                  // optional periodic identification
    // Optional map into a Euclidean ambient space. Used by observables,
    // potentials and test oracles only, never by the integrators.
    std::function<Eigen::VectorXd(const Vec&)> embedding;
};

/// Chart change from_chart -> to_chart on the overlap described by `domain`.
struct TransitionSpec {
    int from_chart = 0;
    int to_chart = 0;
    std::function<bool(const Vec&)> domain;
    std::function<Vec(const Vec&)> map;
    std::function<Mat(const Vec&)> jacobian;
};

struct ChartPoint {
    int chart_id = 0;
    Vec coords;
};

/// Axis-aligned coordinate box used for rejection sampling of the base measure.
/// `volume_bound` must dominate sqrt(det g) on the accepted region.
struct SamplingBox {
    int chart_id = 0;
    Vec lo;
    Vec hi;
    std::function<bool(const Vec&)> accept;  // empty: whole box
    double volume_bound = 1.0;
};

/// Two-parameter patch covering a compact manifold up to a null set, with a
/// diagonal metric in the patch parameters. Drives base quadrature and the
/// finite-volume Laplacian.
struct CompactPatch {
    std::array<double, 2> lo{};
    std::array<double, 2> hi{};
    std::array<bool, 2> periodic{};
    std::function<ChartPoint(double, double)> to_chart;
    // (g_aa, g_bb) of the patch metric; off-diagonal entries are zero.
    std::function<std::array<double, 2>(double, double)> diag_metric;
    // Base quadrature nodes with weights for the Riemannian volume.
    std::function<std::vector<std::pair<ChartPoint, double>>(int)> volume_rule;
};

struct AtlasManifold {
    std::string name;
    int dimension = 0;
    std::vector<ChartSpec> charts;
    std::vector<TransitionSpec> transitions;
    double switch_threshold = std::numeric_limits<double>::infinity();
    std::vector<SamplingBox> sampling_boxes;
    std::optional<CompactPatch> patch;

    const ChartSpec& chart(int chart_id) const;
    bool compact() const { return patch.has_value(); }
};

// --- operations -------------------------------------------------------------

void require_valid(const AtlasManifold& m, const ChartPoint& p);

Mat metric_at(const AtlasManifold& m, const ChartPoint& p);

/// Analytic symbols when the chart provides them, otherwise central differences
/// of the metric with h = 1e-5 (1 + |x|).
Christoffel christoffel_at(const AtlasManifold& m, const ChartPoint& p);
Christoffel christoffel_fd(const AtlasManifold& m, const ChartPoint& p);

/// Same point in `target`. A request for the point's own chart applies the
/// chart's wrap map (if any).
ChartPoint transition_point(const AtlasManifold& m, const ChartPoint& p, int target);

/// Transition of a tangent vector: returns the new point and D(phi) v.
std::pair<ChartPoint, Vec> transition_vector(const AtlasManifold& m, const ChartPoint& p,
                                             const Vec& v, int target);

/// Records a chart change made during a step.
struct ChartSwitch {
    int from_chart = 0;
    int to_chart = 0;
};

struct GeodesicStepResult {
    ChartPoint point;
    Vec velocity;
    std::optional<ChartSwitch> chart_switch;
};

/// One RK4 step of x' = v, v' = -Gamma(v, v), followed by wrap/chart switch.
GeodesicStepResult geodesic_step(const AtlasManifold& m, const ChartPoint& p, const Vec& v, double dt);

struct TransportStepResult {
    ChartPoint point;
    Vec velocity;
    Vec transported;
    std::optional<ChartSwitch> chart_switch;
};

/// Joint RK4 step of the geodesic through (p, along_velocity) and the parallel
/// transport equation w' = -Gamma(x', w). Both vectors are pushed on chart switch.
TransportStepResult transport_step(const AtlasManifold& m, const ChartPoint& p, const Vec& along_velocity,
                                   const Vec& w, double dt);

/// Transported vector only (expressed in the chart of the advanced point).
Vec parallel_transport(const AtlasManifold& m, const ChartPoint& p, const Vec& w, const Vec& along_velocity,
                       double dt);

/// Lower-triangular L with L L^T = g^{-1}; its columns are g-orthonormal.
Mat orthonormal_frame_at(const AtlasManifold& m, const ChartPoint& p);

/// Applies wrap and, past the switch threshold, a chart change. Throws
/// ChartEscape when the result is covered by no chart.
GeodesicStepResult settle_chart(const AtlasManifold& m, const ChartPoint& p, const Vec& v);

double norm_g(const Mat& g, const Vec& v);

// --- built-in manifolds -----------------------------------------------------

AtlasManifold euclidean(int dim);

/// Unit sphere with two stereographic charts. Chart 0 projects from the south
/// pole (covers the north pole at u = 0), chart 1 from the north pole.
AtlasManifold sphere2_stereographic(double switch_threshold = 1.5);

/// [0, 2 pi)^2 with the flat metric; one chart with wrap.
AtlasManifold flat_torus2();

/// Height function for graph surfaces, with analytic first and second derivatives.
struct HeightFunction {
    std::string name;
    std::function<double(double, double)> h;
    std::function<std::array<double, 2>(double, double)> grad;
    std::function<std::array<double, 3>(double, double)> hessian;  // (h_xx, h_xy, h_yy)
};

/// Registry: "paraboloid" (a (x^2 + y^2) / 2) and "sine_sheet" (a sin(k x) sin(k y)).
HeightFunction height_function(const std::string& name, double amplitude, double wavenumber = 1.0);

/// Single chart over R^2 with metric I + grad h grad h^T and analytic Christoffels.
AtlasManifold graph_surface(const HeightFunction& h);

/// Embedded point (x, y, z) on the unit sphere for a sphere2 chart point.
Eigen::Vector3d sphere2_embed(const ChartPoint& p);
/// Inverse of sphere2_embed, choosing the chart with the smaller coordinate radius.
ChartPoint sphere2_chart_point(const Eigen::Vector3d& y);
/// Push of a chart velocity to the ambient R^3.
Eigen::Vector3d sphere2_push_velocity(const ChartPoint& p, const Vec& v);

} // namespace geolangevin
