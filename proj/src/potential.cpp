#include "geolangevin/potential.hpp"

#include <array>
#include <cmath>

#include "geolangevin/errors.hpp"

namespace geolangevin {

namespace {

double param(const ParamMap& params, const std::string& key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

constexpr std::array<const char*, 6> kPotentialNames = {"zero", "quadratic", "sin_x1", "cos_x2", "linear", "height"};

} // namespace

PotentialSpec PotentialSpec::scaled(double factor) const {
    PotentialSpec out = *this;
    out.name = name;
    auto base = psi;
    out.psi = [base, factor](const ChartPoint& p) { return factor * base(p); };
    if (grad) {
        auto g = grad;
        out.grad = [g, factor](const ChartPoint& p) -> Vec { return factor * g(p); };
    }
    if (std::isfinite(lower_bound)) {
        out.lower_bound = factor >= 0.0 ? factor * lower_bound : -std::numeric_limits<double>::infinity();
    }
    if (factor == 0.0) {
        out.constant = true;
        out.lower_bound = 0.0;
    }
    return out;
}

PotentialSpec PotentialSpec::shifted(double offset) const {
    PotentialSpec out = *this;
    auto base = psi;
    out.psi = [base, offset](const ChartPoint& p) { return base(p) + offset; };
    out.lower_bound = lower_bound + offset;
    return out;
}

Vec potential_differential(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p) {
    (void)m;
    const int d = static_cast<int>(p.coords.size());
    if (pot.constant) return Vec::Zero(d);
    const double h = 1e-5 * (1.0 + p.coords.norm());
    auto central = [&](int i, double step) {
        ChartPoint a = p, b = p;
        a.coords[i] += step;
        b.coords[i] -= step;
        return (pot.psi(a) - pot.psi(b)) / (2.0 * step);
    };
    Vec out(d);
    for (int i = 0; i < d; ++i) out[i] = (4.0 * central(i, h) - central(i, 2.0 * h)) / 3.0;
    return out;
}

Vec potential_gradient(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p) {
    if (pot.grad) return pot.grad(p);
    const Mat g = metric_at(m, p);
    return g.ldlt().solve(potential_differential(m, pot, p));
}

Mat potential_coordinate_hessian(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p) {
    (void)m;
    const int d = static_cast<int>(p.coords.size());
    if (pot.constant) return Mat::Zero(d, d);
    const double h = 1e-4 * (1.0 + p.coords.norm());
    auto at = [&](int i, double si, int j, double sj) {
        ChartPoint q = p;
        q.coords[i] += si;
        q.coords[j] += sj;
        return pot.psi(q);
    };
    auto second = [&](int i, int j, double step) {
        if (i == j) {
            return (at(i, step, i, 0.0) - 2.0 * pot.psi(p) + at(i, -step, i, 0.0)) / (step * step);
        }
        return (at(i, step, j, step) - at(i, step, j, -step) - at(i, -step, j, step) + at(i, -step, j, -step)) /
               (4.0 * step * step);
    };
    Mat out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            const double v = (4.0 * second(i, j, h) - second(i, j, 2.0 * h)) / 3.0;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

PotentialSpec zero_potential() {
    PotentialSpec p;
    p.name = "zero";
    p.psi = [](const ChartPoint&) { return 0.0; };
    p.lower_bound = 0.0;
    p.constant = true;
    return p;
}

bool potential_known(const std::string& name) {
    for (const char* n : kPotentialNames) {
        if (name == n) return true;
    }
    return false;
}

PotentialSpec make_potential(const AtlasManifold& m, const std::string& name, const ParamMap& params) {
    PotentialSpec p;
    p.name = name;
    if (name == "zero") {
        p = zero_potential();
    } else if (name == "quadratic") {
        const double k = param(params, "k", 1.0);
        const double offset = param(params, "offset", 0.0);
        p.psi = [k, offset](const ChartPoint& q) { return offset + 0.5 * k * q.coords.squaredNorm(); };
        if (m.name == "euclidean") {
            p.grad = [k](const ChartPoint& q) -> Vec { return k * q.coords; };
        }
        p.lower_bound = k >= 0.0 ? offset : -std::numeric_limits<double>::infinity();
    } else if (name == "sin_x1") {
        const double a = param(params, "amplitude", 1.0);
        p.psi = [a](const ChartPoint& q) { return a * std::sin(q.coords[0]); };
        p.lower_bound = -std::abs(a);
    } else if (name == "cos_x2") {
        if (m.dimension < 2) throw InvalidParameter("cos_x2 needs dimension >= 2");
        const double a = param(params, "amplitude", 1.0);
        p.psi = [a](const ChartPoint& q) { return a * std::cos(q.coords[1]); };
        p.lower_bound = -std::abs(a);
    } else if (name == "linear") {
        const double a = param(params, "a", 1.0);
        p.psi = [a](const ChartPoint& q) { return a * q.coords[0]; };
    } else if (name == "height") {
        const double a = param(params, "amplitude", 1.0);
        for (const auto& c : m.charts) {
            if (!c.embedding) throw InvalidParameter("height potential needs an embedded manifold");
        }
        // Copies of the embeddings, so the potential does not reference the manifold.
        std::vector<std::function<Eigen::VectorXd(const Vec&)>> emb;
        std::vector<int> ids;
        for (const auto& c : m.charts) {
            emb.push_back(c.embedding);
            ids.push_back(c.chart_id);
        }
        p.psi = [a, emb, ids](const ChartPoint& q) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] == q.chart_id) {
                    const Eigen::VectorXd y = emb[i](q.coords);
                    return a * y[y.size() - 1];
                }
            }
            throw InvalidChartPoint("height potential: unknown chart");
        };
        if (m.name == "sphere2") p.lower_bound = -std::abs(a);
    } else {
        throw InvalidParameter("unknown potential: " + name);
    }
    const double shift = param(params, "shift", 0.0);
    if (shift != 0.0) {
        p = p.shifted(shift);
        p.name = name;
    }
    return p;
}

} // namespace geolangevin
