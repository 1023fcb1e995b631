#pragma once

#include <functional>

#include "geolangevin/geometry.hpp"

namespace geolangevin {

/// Point of TM (or UTM) in induced coordinates of one chart.
struct TangentState {
    int chart_id = 0;
    Vec x;
    Vec v;

    ChartPoint point() const { return {chart_id, x}; }
};

/// Element of TTM in induced coordinates: `base` along d/dx^j, `fibre` along d/dv^j.
struct DoubleTangent {
    Vec base;
    Vec fibre;

    DoubleTangent operator+(const DoubleTangent& o) const { return {base + o.base, fibre + o.fibre}; }
    DoubleTangent operator-(const DoubleTangent& o) const { return {base - o.base, fibre - o.fibre}; }
    DoubleTangent operator*(double s) const { return {base * s, fibre * s}; }
};

/// Coefficients of the geodesic spray at a state: G^j = 1/2 Gamma^j_{ik} v^i v^k
/// and N^i_j = Gamma^i_{jk} v^k = dG^i/dv^j.
struct NonlinearConnection {
    Mat N;
    Vec G;
};

using BundleFunction = std::function<double(const TangentState&)>;
using BundleField = std::function<DoubleTangent(const TangentState&)>;
/// Function of the fibre variable alone (the base point is held fixed).
using FibreFunction = std::function<double(const Vec&)>;

/// Tolerance on | |v|_g - 1 | accepted as a unit state.
inline constexpr double kUnitTolerance = 1e-8;

NonlinearConnection nonlinear_connection_at(const AtlasManifold& m, const TangentState& s);

/// Geodesic spray S_g: base = v, fibre = -Gamma(v, v).
DoubleTangent spray_at(const AtlasManifold& m, const TangentState& s);

DoubleTangent vertical_lift(const AtlasManifold& m, const TangentState& s, const Vec& w);

/// Canonical vector field C(s) = vertical_lift(s.v).
DoubleTangent canonical_field(const AtlasManifold& m, const TangentState& s);

/// base = w, fibre = -N w.
DoubleTangent horizontal_lift(const AtlasManifold& m, const TangentState& s, const Vec& w);

/// d kappa(a) = a_fibre + N a_base.
Vec connector_apply(const AtlasManifold& m, const TangentState& s, const DoubleTangent& a);

double sasaki_inner(const AtlasManifold& m, const TangentState& s, const DoubleTangent& a, const DoubleTangent& b);

/// Vertical lift of w - g(w, u) u with u = s.v; requires |u|_g = 1.
DoubleTangent tangential_lift(const AtlasManifold& m, const TangentState& s, const Vec& w);

void require_unit(const AtlasManifold& m, const TangentState& s);

/// Central differences (step 1e-5) along the field, taken separately in base
/// and fibre coordinates.
double apply_field_to_function(const AtlasManifold& m, const BundleField& field, const BundleFunction& f,
                               const TangentState& s, double step = 1e-5);

/// Bracket of vector fields from central differences of the fields (step 1e-4).
///
/// Sign convention: [X, Y] = D_Y X - D_X Y, the convention under which
/// [S, vlift(dx^k)] = hlift(dx^k) - N^j_k vlift(dx^j) holds. This is the
/// negative of the derivation commutator XY - YX.
DoubleTangent lie_bracket_fd(const AtlasManifold& m, const BundleField& X, const BundleField& Y,
                             const TangentState& s, double step = 1e-4);

/// Induced-coordinate divergence (1/det g) d_k(det g S^k) of the spray, by
/// central differences with analytic (or FD) Christoffels. Zero by Liouville.
double spray_divergence_fd(const AtlasManifold& m, const TangentState& s, double step = 1e-5);

/// Spherical gradient of a fibre function at a unit state, as coordinate
/// components of a vector g-orthogonal to u. The function is read through its
/// degree-0 extension f(w / |w|_g).
Vec spherical_gradient_fd(const AtlasManifold& m, const TangentState& s, const FibreFunction& f,
                          double step = 1e-5);

/// Laplace-Beltrami on the unit fibre sphere of (T_x M, g): second differences
/// along fibre-sphere geodesics in g-orthonormal directions (step 1e-3).
double spherical_laplacian_fd(const AtlasManifold& m, const TangentState& s, const FibreFunction& f,
                              double step = 1e-3);

/// g-orthonormal basis (as coordinate columns) of the complement of u in T_x M.
Mat fibre_sphere_tangent_basis(const AtlasManifold& m, const TangentState& s);

} // namespace geolangevin
