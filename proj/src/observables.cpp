#include "geolangevin/observables.hpp"

#include <array>
#include <cmath>

#include "geolangevin/errors.hpp"

namespace geolangevin {

namespace {

constexpr std::array<const char*, 13> kObservableNames = {
    "one",     "cos_x1",  "sin_x1",      "cos_x2",      "sin_x2",      "x_power", "v_power",
    "embed",   "height",  "v_g_norm_sq", "v_angle_cos", "v_angle_sin", "x_component"};

double param(const ParamMap& params, const std::string& key, double fallback) {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

int component(const AtlasManifold& m, const ParamMap& params, int limit) {
    const double c = param(params, "component", 1.0);
    const int i = static_cast<int>(c);
    if (i != c || i < 1 || i > limit) {
        throw InvalidParameter("observable component must be an integer in [1, " + std::to_string(limit) + "] on " +
                               m.name);
    }
    return i - 1;
}

// Frame coordinates of v: solves L xi = v with L the lower-triangular frame.
Vec frame_coordinates(const AtlasManifold& m, const TangentState& s) {
    const Mat L = orthonormal_frame_at(m, s.point());
    return L.triangularView<Eigen::Lower>().solve(s.v);
}

std::function<Eigen::VectorXd(const ChartPoint&)> embedding_of(const AtlasManifold& m) {
    std::vector<std::function<Eigen::VectorXd(const Vec&)>> emb;
    std::vector<int> ids;
    for (const auto& c : m.charts) {
        if (!c.embedding) throw InvalidParameter("observable needs an embedded manifold; " + m.name + " has none");
        emb.push_back(c.embedding);
        ids.push_back(c.chart_id);
    }
    return [emb, ids](const ChartPoint& p) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] == p.chart_id) return emb[i](p.coords);
        }
        throw InvalidChartPoint("unknown chart " + std::to_string(p.chart_id));
    };
}

} // namespace

bool observable_known(const std::string& name) {
    for (const char* n : kObservableNames) {
        if (name == n) return true;
    }
    return false;
}

BundleFunction make_observable(const AtlasManifold& m, const ObservableSpec& spec) {
    const std::string& name = spec.name;
    const int d = m.dimension;
    if (name == "one") return [](const TangentState&) { return 1.0; };
    if (name == "cos_x1") return [](const TangentState& s) { return std::cos(s.x[0]); };
    if (name == "sin_x1") return [](const TangentState& s) { return std::sin(s.x[0]); };
    if (name == "cos_x2" || name == "sin_x2") {
        if (d < 2) throw InvalidParameter(name + " needs dimension >= 2");
        if (name == "cos_x2") return [](const TangentState& s) { return std::cos(s.x[1]); };
        return [](const TangentState& s) { return std::sin(s.x[1]); };
    }
    if (name == "x_component") {
        const int i = component(m, spec.params, d);
        return [i](const TangentState& s) { return s.x[i]; };
    }
    if (name == "x_power" || name == "v_power") {
        const int i = component(m, spec.params, d);
        const double power = param(spec.params, "power", 1.0);
        if (name == "x_power") return [i, power](const TangentState& s) { return std::pow(s.x[i], power); };
        return [i, power](const TangentState& s) { return std::pow(s.v[i], power); };
    }
    if (name == "embed" || name == "height") {
        auto emb = embedding_of(m);
        const int dim = static_cast<int>(m.charts.front().embedding(Vec::Zero(d)).size());
        const int i = name == "height" ? dim - 1 : component(m, spec.params, dim);
        return [emb, i](const TangentState& s) { return emb(s.point())[i]; };
    }
    if (name == "v_g_norm_sq") {
        const AtlasManifold* mp = &m;
        return [mp](const TangentState& s) { return s.v.dot(metric_at(*mp, s.point()) * s.v); };
    }
    if (name == "v_angle_cos" || name == "v_angle_sin") {
        if (d != 2) throw InvalidParameter(name + " needs dimension 2");
        const AtlasManifold* mp = &m;
        const bool cosine = name == "v_angle_cos";
        return [mp, cosine](const TangentState& s) {
            const Vec xi = frame_coordinates(*mp, s);
            const double r = xi.norm();
            return (cosine ? xi[0] : xi[1]) / r;
        };
    }
    throw InvalidParameter("unknown observable: " + name);
}

} // namespace geolangevin
