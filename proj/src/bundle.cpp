#include "geolangevin/bundle.hpp"

#include <cmath>

#include "geolangevin/errors.hpp"

namespace geolangevin {

namespace {

TangentState displaced(const TangentState& s, const DoubleTangent& a, double h) {
    return {s.chart_id, s.x + h * a.base, s.v + h * a.fibre};
}

} // namespace

NonlinearConnection nonlinear_connection_at(const AtlasManifold& m, const TangentState& s) {
    const Christoffel gamma = christoffel_at(m, s.point());
    return {gamma.contract_last(s.v), 0.5 * gamma.contract(s.v, s.v)};
}

DoubleTangent spray_at(const AtlasManifold& m, const TangentState& s) {
    const Christoffel gamma = christoffel_at(m, s.point());
    return {s.v, -gamma.contract(s.v, s.v)};
}

DoubleTangent vertical_lift(const AtlasManifold&, const TangentState& s, const Vec& w) {
    return {Vec::Zero(s.x.size()), w};
}

DoubleTangent canonical_field(const AtlasManifold& m, const TangentState& s) { return vertical_lift(m, s, s.v); }

DoubleTangent horizontal_lift(const AtlasManifold& m, const TangentState& s, const Vec& w) {
    const Christoffel gamma = christoffel_at(m, s.point());
    return {w, -gamma.contract(w, s.v)};
}

Vec connector_apply(const AtlasManifold& m, const TangentState& s, const DoubleTangent& a) {
    const Christoffel gamma = christoffel_at(m, s.point());
    return a.fibre + gamma.contract(a.base, s.v);
}

double sasaki_inner(const AtlasManifold& m, const TangentState& s, const DoubleTangent& a, const DoubleTangent& b) {
    const Mat g = metric_at(m, s.point());
    const Vec ka = connector_apply(m, s, a);
    const Vec kb = connector_apply(m, s, b);
    return ka.dot(g * kb) + a.base.dot(g * b.base);
}

void require_unit(const AtlasManifold& m, const TangentState& s) {
    const Mat g = metric_at(m, s.point());
    const double n = norm_g(g, s.v);
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
        throw NotUnitState("state velocity has g-norm " + std::to_string(n));
    }
}

DoubleTangent tangential_lift(const AtlasManifold& m, const TangentState& s, const Vec& w) {
    require_unit(m, s);
    const Mat g = metric_at(m, s.point());
    const Vec projected = w - w.dot(g * s.v) * s.v;
    return vertical_lift(m, s, projected);
}

double apply_field_to_function(const AtlasManifold& m, const BundleField& field, const BundleFunction& f,
                               const TangentState& s, double step) {
    (void)m;
    const DoubleTangent a = field(s);
    const Vec zero = Vec::Zero(s.x.size());
    double out = 0.0;
    if (a.base.squaredNorm() > 0.0) {
        const DoubleTangent b{a.base, zero};
        out += (f(displaced(s, b, step)) - f(displaced(s, b, -step))) / (2.0 * step);
    }
    if (a.fibre.squaredNorm() > 0.0) {
        const DoubleTangent b{zero, a.fibre};
        out += (f(displaced(s, b, step)) - f(displaced(s, b, -step))) / (2.0 * step);
    }
    return out;
}

DoubleTangent lie_bracket_fd(const AtlasManifold&, const BundleField& X, const BundleField& Y, const TangentState& s,
                             double step) {
    const DoubleTangent xs = X(s);
    const DoubleTangent ys = Y(s);
    const DoubleTangent dxy = (Y(displaced(s, xs, step)) - Y(displaced(s, xs, -step))) * (0.5 / step);
    const DoubleTangent dyx = (X(displaced(s, ys, step)) - X(displaced(s, ys, -step))) * (0.5 / step);
    return dyx - dxy;
}

double spray_divergence_fd(const AtlasManifold& m, const TangentState& s, double step) {
    const int d = static_cast<int>(s.x.size());
    auto weighted_spray = [&](const TangentState& t) {
        const double det = m.chart(t.chart_id).metric(t.x).determinant();
        const DoubleTangent a = spray_at(m, t);
        return DoubleTangent{a.base * det, a.fibre * det};
    };
    double div = 0.0;
    for (int i = 0; i < d; ++i) {
        TangentState p = s, q = s;
        p.x[i] += step;
        q.x[i] -= step;
        div += (weighted_spray(p).base[i] - weighted_spray(q).base[i]) / (2.0 * step);
    }
    for (int k = 0; k < d; ++k) {
        TangentState p = s, q = s;
        p.v[k] += step;
        q.v[k] -= step;
        div += (weighted_spray(p).fibre[k] - weighted_spray(q).fibre[k]) / (2.0 * step);
    }
    return div / m.chart(s.chart_id).metric(s.x).determinant();
}

Vec spherical_gradient_fd(const AtlasManifold& m, const TangentState& s, const FibreFunction& f, double step) {
    require_unit(m, s);
    const Mat g = metric_at(m, s.point());
    const int d = static_cast<int>(s.v.size());
    auto extended = [&](const Vec& w) { return f(w / norm_g(g, w)); };
    Vec df(d);
    for (int j = 0; j < d; ++j) {
        Vec p = s.v, q = s.v;
        p[j] += step;
        q[j] -= step;
        df[j] = (extended(p) - extended(q)) / (2.0 * step);
    }
    const Vec grad = g.ldlt().solve(df);
    return grad - grad.dot(g * s.v) * s.v;
}

Mat fibre_sphere_tangent_basis(const AtlasManifold& m, const TangentState& s) {
    require_unit(m, s);
    const Mat L = orthonormal_frame_at(m, s.point());
    const int d = static_cast<int>(s.v.size());
    // Euclidean components of u in the frame, then Gram-Schmidt against it.
    const Vec u_frame = L.triangularView<Eigen::Lower>().solve(s.v);
    Mat basis(d, d);
    basis.col(0) = u_frame / u_frame.norm();
    int filled = 1;
    for (int e = 0; e < d && filled < d; ++e) {
        Vec c = Vec::Unit(d, e);
        for (int k = 0; k < filled; ++k) c -= c.dot(basis.col(k)) * basis.col(k);
        for (int k = 0; k < filled; ++k) c -= c.dot(basis.col(k)) * basis.col(k);
        const double n = c.norm();
        if (n < 1e-6) continue;
        basis.col(filled++) = c / n;
    }
    Mat out(d, d - 1);
    for (int a = 1; a < d; ++a) out.col(a - 1) = L * basis.col(a);
    return out;
}

double spherical_laplacian_fd(const AtlasManifold& m, const TangentState& s, const FibreFunction& f, double step) {
    const Mat T = fibre_sphere_tangent_basis(m, s);
    const double f0 = f(s.v);
    const double c = std::cos(step);
    const double sn = std::sin(step);
    double acc = 0.0;
    for (int a = 0; a < T.cols(); ++a) {
        const Vec plus = c * s.v + sn * T.col(a);
        const Vec minus = c * s.v - sn * T.col(a);
        acc += f(plus) - 2.0 * f0 + f(minus);
    }
    return acc / (step * step);
}

} // namespace geolangevin
