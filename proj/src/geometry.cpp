#include "geolangevin/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "geolangevin/errors.hpp"
#include "geolangevin/quadrature.hpp"

namespace geolangevin {

namespace {

std::string describe(const ChartPoint& p) {
    std::ostringstream os;
    os << "chart " << p.chart_id << " at (";
    for (int i = 0; i < p.coords.size(); ++i) os << (i ? ", " : "") << p.coords[i];
    os << ")";
    return os.str();
}

Christoffel zero_christoffel(int dim) { return Christoffel(dim); }

struct Deriv {
    Vec dx;
    Vec dv;
};

Deriv geodesic_rhs(const AtlasManifold& m, int chart_id, const Vec& x, const Vec& v) {
    const ChartSpec& c = m.chart(chart_id);
    if (!c.wrap && !c.validity(x)) {
        throw ChartEscape("geodesic stage left the chart: " + describe({chart_id, x}));
    }
    const Christoffel gamma = christoffel_at(m, {chart_id, x});
    return {v, -gamma.contract(v, v)};
}

} // namespace

const ChartSpec& AtlasManifold::chart(int chart_id) const {
    for (const auto& c : charts) {
        if (c.chart_id == chart_id) return c;
    }
    throw InvalidChartPoint(name + ": unknown chart id " + std::to_string(chart_id));
}

void require_valid(const AtlasManifold& m, const ChartPoint& p) {
    const ChartSpec& c = m.chart(p.chart_id);
    if (p.coords.size() != c.dimension) {
        throw InvalidChartPoint(m.name + ": coordinate length mismatch at " + describe(p));
    }
    for (int i = 0; i < p.coords.size(); ++i) {
        if (!std::isfinite(p.coords[i])) throw InvalidChartPoint(m.name + ": non-finite " + describe(p));
    }
    if (c.validity && !c.validity(p.coords)) {
        throw InvalidChartPoint(m.name + ": point outside chart: " + describe(p));
    }
}

Mat metric_at(const AtlasManifold& m, const ChartPoint& p) {
    require_valid(m, p);
    return m.chart(p.chart_id).metric(p.coords);
}

Christoffel christoffel_fd(const AtlasManifold& m, const ChartPoint& p) {
    const ChartSpec& c = m.chart(p.chart_id);
    const int d = c.dimension;
    const Mat g = c.metric(p.coords);
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success) throw SingularMetric(m.name + ": metric not SPD at " + describe(p));
    const Mat ginv = llt.solve(Mat::Identity(d, d));

    const double h = 1e-5 * (1.0 + p.coords.norm());
    std::array<Mat, kMaxDim> dg;
    for (int l = 0; l < d; ++l) {
        Vec xp = p.coords, xm = p.coords;
        xp[l] += h;
        xm[l] -= h;
        dg[l] = (c.metric(xp) - c.metric(xm)) / (2.0 * h);
    }
    Christoffel out(d);
    for (int k = 0; k < d; ++k) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int l = 0; l < d; ++l) {
                    acc += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                }
                out(k, i, j) = 0.5 * acc;
            }
        }
    }
    return out;
}

Christoffel christoffel_at(const AtlasManifold& m, const ChartPoint& p) {
    const ChartSpec& c = m.chart(p.chart_id);
    if (c.christoffel) return c.christoffel(p.coords);
    return christoffel_fd(m, p);
}

ChartPoint transition_point(const AtlasManifold& m, const ChartPoint& p, int target) {
    if (target == p.chart_id) {
        const ChartSpec& c = m.chart(p.chart_id);
        if (c.wrap) return {p.chart_id, c.wrap(p.coords)};
        return p;
    }
    for (const auto& t : m.transitions) {
        if (t.from_chart != p.chart_id || t.to_chart != target) continue;
        if (t.domain && !t.domain(p.coords)) {
            throw OutOfDomain(m.name + ": point not in transition domain: " + describe(p));
        }
        return {target, t.map(p.coords)};
    }
    throw NoTransition(m.name + ": no transition from chart " + std::to_string(p.chart_id) + " to " +
                       std::to_string(target));
}

std::pair<ChartPoint, Vec> transition_vector(const AtlasManifold& m, const ChartPoint& p, const Vec& v,
                                             int target) {
    if (target == p.chart_id) return {transition_point(m, p, target), v};
    for (const auto& t : m.transitions) {
        if (t.from_chart != p.chart_id || t.to_chart != target) continue;
        if (t.domain && !t.domain(p.coords)) {
            throw OutOfDomain(m.name + ": point not in transition domain: " + describe(p));
        }
        return {{target, t.map(p.coords)}, t.jacobian(p.coords) * v};
    }
    throw NoTransition(m.name + ": no transition from chart " + std::to_string(p.chart_id) + " to " +
                       std::to_string(target));
}

GeodesicStepResult settle_chart(const AtlasManifold& m, const ChartPoint& p, const Vec& v) {
    const ChartSpec& c = m.chart(p.chart_id);
    GeodesicStepResult out{p, v, std::nullopt};
    if (c.wrap) out.point.coords = c.wrap(p.coords);

    if (out.point.coords.norm() > m.switch_threshold) {
        for (const auto& t : m.transitions) {
            if (t.from_chart != p.chart_id) continue;
            if (t.domain && !t.domain(out.point.coords)) continue;
            Vec q = t.map(out.point.coords);
            const ChartSpec& target = m.chart(t.to_chart);
            if (target.validity && !target.validity(q)) continue;
            out.velocity = t.jacobian(out.point.coords) * out.velocity;
            out.chart_switch = ChartSwitch{p.chart_id, t.to_chart};
            out.point = {t.to_chart, std::move(q)};
            return out;
        }
    }
    if (c.validity && !c.validity(out.point.coords)) {
        throw ChartEscape(m.name + ": no chart covers " + describe(out.point));
    }
    return out;
}

GeodesicStepResult geodesic_step(const AtlasManifold& m, const ChartPoint& p, const Vec& v, double dt) {
    if (!(dt > 0.0)) throw InvalidParameter("geodesic_step: dt must be positive");
    require_valid(m, p);
    const int id = p.chart_id;
    const Vec& x = p.coords;
    const Deriv k1 = geodesic_rhs(m, id, x, v);
    const Deriv k2 = geodesic_rhs(m, id, x + 0.5 * dt * k1.dx, v + 0.5 * dt * k1.dv);
    const Deriv k3 = geodesic_rhs(m, id, x + 0.5 * dt * k2.dx, v + 0.5 * dt * k2.dv);
    const Deriv k4 = geodesic_rhs(m, id, x + dt * k3.dx, v + dt * k3.dv);
    const Vec x_new = x + (dt / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    const Vec v_new = v + (dt / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    return settle_chart(m, {id, x_new}, v_new);
}

TransportStepResult transport_step(const AtlasManifold& m, const ChartPoint& p, const Vec& along_velocity,
                                   const Vec& w, double dt) {
    if (!(dt > 0.0)) throw InvalidParameter("transport_step: dt must be positive");
    require_valid(m, p);
    const int id = p.chart_id;
    struct Stage {
        Vec dx, dv, dw;
    };
    auto rhs = [&](const Vec& x, const Vec& v, const Vec& wv) {
        const ChartSpec& c = m.chart(id);
        if (!c.wrap && !c.validity(x)) throw ChartEscape("transport stage left the chart");
        const Christoffel gamma = christoffel_at(m, {id, x});
        return Stage{v, -gamma.contract(v, v), -gamma.contract(v, wv)};
    };
    const Vec& x = p.coords;
    const Vec& v = along_velocity;
    const Stage k1 = rhs(x, v, w);
    const Stage k2 = rhs(x + 0.5 * dt * k1.dx, v + 0.5 * dt * k1.dv, w + 0.5 * dt * k1.dw);
    const Stage k3 = rhs(x + 0.5 * dt * k2.dx, v + 0.5 * dt * k2.dv, w + 0.5 * dt * k2.dw);
    const Stage k4 = rhs(x + dt * k3.dx, v + dt * k3.dv, w + dt * k3.dw);
    const Vec x_new = x + (dt / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    const Vec v_new = v + (dt / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    Vec w_new = w + (dt / 6.0) * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw);

    GeodesicStepResult settled = settle_chart(m, {id, x_new}, v_new);
    if (settled.chart_switch) {
        for (const auto& t : m.transitions) {
            if (t.from_chart == id && t.to_chart == settled.chart_switch->to_chart) {
                w_new = t.jacobian(x_new) * w_new;
                break;
            }
        }
    }
    return {std::move(settled.point), std::move(settled.velocity), std::move(w_new), settled.chart_switch};
}

Vec parallel_transport(const AtlasManifold& m, const ChartPoint& p, const Vec& w, const Vec& along_velocity,
                       double dt) {
    return transport_step(m, p, along_velocity, w, dt).transported;
}

Mat orthonormal_frame_at(const AtlasManifold& m, const ChartPoint& p) {
    const Mat g = metric_at(m, p);
    const int d = static_cast<int>(g.rows());
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success) throw SingularMetric(m.name + ": metric not SPD at " + describe(p));
    const Mat ginv = llt.solve(Mat::Identity(d, d));
    Eigen::LLT<Mat> inv_llt(ginv);
    if (inv_llt.info() != Eigen::Success) throw SingularMetric(m.name + ": inverse metric not SPD");
    return inv_llt.matrixL();
}

double norm_g(const Mat& g, const Vec& v) { return std::sqrt(v.dot(g * v)); }

// --- built-ins --------------------------------------------------------------

AtlasManifold euclidean(int dim) {
    if (dim < 1 || dim > kMaxDim) throw InvalidParameter("euclidean: dimension out of range");
    AtlasManifold m;
    m.name = "euclidean";
    m.dimension = dim;
    ChartSpec c;
    c.chart_id = 0;
    c.dimension = dim;
    c.validity = [](const Vec&) { return true; };
    c.metric = [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); };
    c.christoffel = [dim](const Vec&) { return zero_christoffel(dim); };
    m.charts.push_back(std::move(c));
    return m;
}

namespace {

constexpr double kStereoSafeRadius = 10.0;

Mat stereo_metric(const Vec& u) {
    const double s = 1.0 + u.squaredNorm();
    return (4.0 / (s * s)) * Mat::Identity(2, 2);
}

Christoffel stereo_christoffel(const Vec& u) {
    const double s = 1.0 + u.squaredNorm();
    Christoffel out(2);
    for (int k = 0; k < 2; ++k) {
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                const double dki = (k == i) ? 1.0 : 0.0;
                const double dkj = (k == j) ? 1.0 : 0.0;
                const double dij = (i == j) ? 1.0 : 0.0;
                out(k, i, j) = -2.0 * (dki * u[j] + dkj * u[i] - dij * u[k]) / s;
            }
        }
    }
    return out;
}

Vec inversion(const Vec& u) { return u / u.squaredNorm(); }

Mat inversion_jacobian(const Vec& u) {
    const double r2 = u.squaredNorm();
    return (Mat::Identity(2, 2) * r2 - 2.0 * u * u.transpose()) / (r2 * r2);
}

Eigen::VectorXd stereo_embed(const Vec& u, double pole_sign) {
    const double s = 1.0 + u.squaredNorm();
    Eigen::VectorXd y(3);
    y << 2.0 * u[0] / s, 2.0 * u[1] / s, pole_sign * (1.0 - u.squaredNorm()) / s;
    return y;
}

} // namespace

Eigen::Vector3d sphere2_embed(const ChartPoint& p) {
    const double sign = p.chart_id == 0 ? 1.0 : -1.0;
    const Eigen::VectorXd y = stereo_embed(p.coords, sign);
    return {y[0], y[1], y[2]};
}

ChartPoint sphere2_chart_point(const Eigen::Vector3d& y) {
    Vec u(2);
    if (y[2] >= 0.0) {
        u << y[0] / (1.0 + y[2]), y[1] / (1.0 + y[2]);
        return {0, u};
    }
    u << y[0] / (1.0 - y[2]), y[1] / (1.0 - y[2]);
    return {1, u};
}

Eigen::Vector3d sphere2_push_velocity(const ChartPoint& p, const Vec& v) {
    const Vec& u = p.coords;
    const double s = 1.0 + u.squaredNorm();
    const double sign = p.chart_id == 0 ? 1.0 : -1.0;
    // d/du of (2u/s, sign (1 - |u|^2)/s)
    Eigen::Matrix<double, 3, 2> J;
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) {
            J(i, j) = 2.0 * ((i == j ? 1.0 : 0.0) * s - 2.0 * u[i] * u[j]) / (s * s);
        }
        J(2, j) = sign * (-4.0 * u[j]) / (s * s);
    }
    return J * Eigen::Vector2d(v[0], v[1]);
}

AtlasManifold sphere2_stereographic(double switch_threshold) {
    AtlasManifold m;
    m.name = "sphere2";
    m.dimension = 2;
    m.switch_threshold = switch_threshold;
    for (int id = 0; id < 2; ++id) {
        ChartSpec c;
        c.chart_id = id;
        c.dimension = 2;
        c.validity = [](const Vec& u) { return u.norm() < kStereoSafeRadius; };
        c.metric = stereo_metric;
        c.christoffel = stereo_christoffel;
        const double sign = id == 0 ? 1.0 : -1.0;
        c.embedding = [sign](const Vec& u) { return stereo_embed(u, sign); };
        m.charts.push_back(std::move(c));
    }
    for (int id = 0; id < 2; ++id) {
        TransitionSpec t;
        t.from_chart = id;
        t.to_chart = 1 - id;
        t.domain = [](const Vec& u) { return u.norm() > 1.0 / kStereoSafeRadius; };
        t.map = inversion;
        t.jacobian = inversion_jacobian;
        m.transitions.push_back(std::move(t));
    }
    for (int id = 0; id < 2; ++id) {
        SamplingBox box;
        box.chart_id = id;
        box.lo = Vec::Constant(2, -1.0);
        box.hi = Vec::Constant(2, 1.0);
        box.accept = [](const Vec& u) { return u.squaredNorm() <= 1.0; };
        box.volume_bound = 4.0;
        m.sampling_boxes.push_back(std::move(box));
    }

    CompactPatch patch;
    patch.lo = {0.0, 0.0};
    patch.hi = {std::numbers::pi, 2.0 * std::numbers::pi};
    patch.periodic = {false, true};
    patch.to_chart = [](double theta, double phi) {
        const Eigen::Vector3d y(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
        return sphere2_chart_point(y);
    };
    patch.diag_metric = [](double theta, double) {
        const double s = std::sin(theta);
        return std::array<double, 2>{1.0, s * s};
    };
    patch.volume_rule = [](int n) {
        // Gauss-Legendre in cos(theta) times a uniform azimuthal grid.
        const GaussRule gl = gauss_legendre(n);
        const int n_phi = 2 * n;
        const double dphi = 2.0 * std::numbers::pi / n_phi;
        std::vector<std::pair<ChartPoint, double>> out;
        out.reserve(static_cast<std::size_t>(n) * n_phi);
        for (int i = 0; i < n; ++i) {
            const double z = gl.nodes[i];
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            for (int j = 0; j < n_phi; ++j) {
                const double phi = (j + 0.5) * dphi;
                const Eigen::Vector3d y(r * std::cos(phi), r * std::sin(phi), z);
                out.emplace_back(sphere2_chart_point(y), gl.weights[i] * dphi);
            }
        }
        return out;
    };
    m.patch = std::move(patch);
    return m;
}

AtlasManifold flat_torus2() {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    AtlasManifold m;
    m.name = "flat_torus2";
    m.dimension = 2;
    ChartSpec c;
    c.chart_id = 0;
    c.dimension = 2;
    c.validity = [](const Vec&) { return true; };
    c.metric = [](const Vec&) -> Mat { return Mat::Identity(2, 2); };
    c.christoffel = [](const Vec&) { return zero_christoffel(2); };
    c.wrap = [](const Vec& x) {
        Vec y(2);
        for (int i = 0; i < 2; ++i) {
            double r = std::fmod(x[i], two_pi);
            if (r < 0.0) r += two_pi;
            if (r >= two_pi) r -= two_pi;
            y[i] = r;
        }
        return y;
    };
    m.charts.push_back(std::move(c));

    SamplingBox box;
    box.chart_id = 0;
    box.lo = Vec::Zero(2);
    box.hi = Vec::Constant(2, two_pi);
    box.volume_bound = 1.0;
    m.sampling_boxes.push_back(std::move(box));

    CompactPatch patch;
    patch.lo = {0.0, 0.0};
    patch.hi = {two_pi, two_pi};
    patch.periodic = {true, true};
    patch.to_chart = [](double a, double b) {
        Vec x(2);
        x << a, b;
        return ChartPoint{0, x};
    };
    patch.diag_metric = [](double, double) { return std::array<double, 2>{1.0, 1.0}; };
    patch.volume_rule = [](int n) {
        const double h = two_pi / n;
        std::vector<std::pair<ChartPoint, double>> out;
        out.reserve(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                Vec x(2);
                x << i * h, j * h;
                out.emplace_back(ChartPoint{0, x}, h * h);
            }
        }
        return out;
    };
    m.patch = std::move(patch);
    return m;
}

HeightFunction height_function(const std::string& name, double amplitude, double wavenumber) {
    const double a = amplitude;
    const double k = wavenumber;
    if (name == "paraboloid") {
        return {name, [a](double x, double y) { return 0.5 * a * (x * x + y * y); },
                [a](double x, double y) { return std::array<double, 2>{a * x, a * y}; },
                [a](double, double) { return std::array<double, 3>{a, 0.0, a}; }};
    }
    if (name == "sine_sheet") {
        return {name, [a, k](double x, double y) { return a * std::sin(k * x) * std::sin(k * y); },
                [a, k](double x, double y) {
                    return std::array<double, 2>{a * k * std::cos(k * x) * std::sin(k * y),
                                                 a * k * std::sin(k * x) * std::cos(k * y)};
                },
                [a, k](double x, double y) {
                    const double kk = a * k * k;
                    return std::array<double, 3>{-kk * std::sin(k * x) * std::sin(k * y),
                                                 kk * std::cos(k * x) * std::cos(k * y),
                                                 -kk * std::sin(k * x) * std::sin(k * y)};
                }};
    }
    throw InvalidParameter("unknown height function: " + name);
}

AtlasManifold graph_surface(const HeightFunction& hf) {
    AtlasManifold m;
    m.name = "graph_surface";
    m.dimension = 2;
    ChartSpec c;
    c.chart_id = 0;
    c.dimension = 2;
    c.validity = [](const Vec& x) { return std::isfinite(x[0]) && std::isfinite(x[1]); };
    c.metric = [hf](const Vec& x) -> Mat {
        const auto g = hf.grad(x[0], x[1]);
        Mat out(2, 2);
        out << 1.0 + g[0] * g[0], g[0] * g[1], g[0] * g[1], 1.0 + g[1] * g[1];
        return out;
    };
    c.christoffel = [hf](const Vec& x) {
        const auto g = hf.grad(x[0], x[1]);
        const auto H = hf.hessian(x[0], x[1]);
        const double hess[2][2] = {{H[0], H[1]}, {H[1], H[2]}};
        const double s = 1.0 + g[0] * g[0] + g[1] * g[1];
        Christoffel out(2);
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) out(k, i, j) = g[k] * hess[i][j] / s;
        return out;
    };
    c.embedding = [hf](const Vec& x) {
        Eigen::VectorXd y(3);
        y << x[0], x[1], hf.h(x[0], x[1]);
        return y;
    };
    m.charts.push_back(std::move(c));
    return m;
}

} // namespace geolangevin
