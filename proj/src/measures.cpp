#include "geolangevin/measures.hpp"

#include <cmath>
#include <numbers>

#include "geolangevin/errors.hpp"
#include "geolangevin/kernels.hpp"
#include "geolangevin/quadrature.hpp"

namespace geolangevin {

namespace {

double sqrt_det(const AtlasManifold& m, const ChartPoint& p) { return std::sqrt(metric_at(m, p).determinant()); }

double box_volume(const SamplingBox& b) { return (b.hi - b.lo).prod(); }

// Tensor Gauss-Legendre rule over the sampling boxes, for non-compact bases.
std::vector<std::pair<ChartPoint, double>> box_volume_rule(const AtlasManifold& m, int n) {
    if (m.sampling_boxes.empty()) {
        throw NonCompactBase(m.name + ": no compact patch and no sampling box declared");
    }
    const int d = m.dimension;
    const GaussRule gl = gauss_legendre(n);
    std::vector<std::pair<ChartPoint, double>> out;
    for (const auto& box : m.sampling_boxes) {
        std::vector<int> idx(d, 0);
        const Vec half = 0.5 * (box.hi - box.lo);
        const Vec mid = 0.5 * (box.hi + box.lo);
        for (;;) {
            Vec x(d);
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                x[i] = mid[i] + half[i] * gl.nodes[idx[i]];
                w *= half[i] * gl.weights[idx[i]];
            }
            if (!box.accept || box.accept(x)) {
                ChartPoint p{box.chart_id, x};
                out.emplace_back(p, w * sqrt_det(m, p));
            }
            int k = 0;
            while (k < d && ++idx[k] == n) idx[k++] = 0;
            if (k == d) break;
        }
    }
    return out;
}

std::vector<std::pair<ChartPoint, double>> volume_rule(const AtlasManifold& m, int n) {
    if (m.patch) return m.patch->volume_rule(n);
    // Keep the tensor rule affordable in higher dimension.
    const int capped = m.dimension <= 1 ? 4 * n : (m.dimension == 2 ? n : std::min(n, 24));
    return box_volume_rule(m, capped);
}

double partition_at(const AtlasManifold& m, const PotentialSpec& phi, int n) {
    const auto rule = volume_rule(m, n);
    double z = 0.0;
    for (const auto& [p, w] : rule) z += w * std::exp(-phi(p));
    return z;
}

Mat frame(const AtlasManifold& m, const ChartPoint& p) { return orthonormal_frame_at(m, p); }

double min_potential_bound(const PotentialSpec& phi) {
    if (!std::isfinite(phi.lower_bound)) {
        throw InvalidParameter("potential '" + phi.name + "' declares no lower bound; cannot build a sampling envelope");
    }
    return phi.lower_bound;
}

} // namespace

void QuadratureSpec::validate() const {
    if (base_n < 4) throw InvalidParameter("quadrature: base_n must be >= 4");
    if (hermite_order < 4 || sphere_n_theta < 4 || sphere_n_phi < 4 || circle_n < 4) {
        throw InvalidParameter("quadrature: fibre orders must be >= 4");
    }
}

double unit_sphere_area(int d) { return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d); }

std::pair<double, double> base_partition(const AtlasManifold& m, const PotentialSpec& phi, int n) {
    const double z = partition_at(m, phi, n);
    const double coarse = partition_at(m, phi, std::max(4, n / 2));
    return {z, std::abs(z - coarse)};
}

BundleMeasureSpec bundle_measure(const AtlasManifold& m, const ModelParams& model) {
    BundleMeasureSpec spec;
    if (const auto* lp = std::get_if<LangevinParams>(&model)) {
        spec.base_potential = lp->potential.scaled(lp->beta);
        spec.fibre = FibreKind::gaussian;
        spec.beta = lp->beta;
    } else {
        spec.base_potential = std::get<FldParams>(model).potential;
        spec.fibre = FibreKind::uniform_sphere;
    }
    if (m.compact() || !m.sampling_boxes.empty()) {
        std::tie(spec.normalization, spec.normalization_error) = base_partition(m, spec.base_potential);
    }
    return spec;
}

double mu_density_chart(const AtlasManifold& m, const BundleMeasureSpec& spec, const TangentState& s) {
    const ChartPoint p = s.point();
    require_valid(m, p);
    const Mat g = metric_at(m, p);
    const double det = g.determinant();
    const double base = std::exp(-spec.base_potential(p)) * std::sqrt(det) / spec.normalization;
    const int d = static_cast<int>(s.v.size());
    if (spec.fibre == FibreKind::gaussian) {
        const double q = s.v.dot(g * s.v);
        return base * std::pow(spec.beta / (2.0 * std::numbers::pi), 0.5 * d) * std::sqrt(det) *
               std::exp(-0.5 * spec.beta * q);
    }
    return base / unit_sphere_area(d);
}

ChartPoint sample_base(const AtlasManifold& m, const PotentialSpec& phi, RandomStream& rng) {
    if (m.sampling_boxes.empty()) throw NonCompactBase(m.name + ": no sampling box declared");
    const double phi_min = min_potential_bound(phi);
    // Mixture over boxes proportional to each box's envelope mass.
    std::vector<double> mass;
    double total = 0.0;
    for (const auto& b : m.sampling_boxes) {
        mass.push_back(box_volume(b) * b.volume_bound);
        total += mass.back();
    }
    const int d = m.dimension;
    for (;;) {
        double r = rng.uniform() * total;
        std::size_t k = 0;
        while (k + 1 < mass.size() && r >= mass[k]) r -= mass[k++];
        const SamplingBox& box = m.sampling_boxes[k];
        Vec x(d);
        for (int i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform();
        const double u = rng.uniform();
        if (box.accept && !box.accept(x)) continue;
        ChartPoint p{box.chart_id, x};
        if (phi.constant && m.patch && m.sampling_boxes.size() == 1 && box.volume_bound == 1.0 && !box.accept) {
            return p;  // flat box with constant weight: direct uniform draw
        }
        const double target = std::exp(-(phi(p) - phi_min)) * sqrt_det(m, p);
        const double envelope = box.volume_bound;
        if (target > envelope * (1.0 + 1e-12)) {
            throw EnvelopeViolation("sampling envelope exceeded on " + m.name + ": density " + std::to_string(target) +
                                    " > bound " + std::to_string(envelope));
        }
        if (u * envelope <= target) return p;
    }
}

Vec sample_fibre(const AtlasManifold& m, const BundleMeasureSpec& spec, const ChartPoint& p, RandomStream& rng) {
    const Mat L = frame(m, p);
    const Vec z = rng.gaussian_vec(m.dimension);
    if (spec.fibre == FibreKind::gaussian) return (L * z) / std::sqrt(spec.beta);
    Vec v = L * z;
    return v / norm_g(metric_at(m, p), v);
}

std::vector<TangentState> sample_mu(const AtlasManifold& m, const BundleMeasureSpec& spec, std::size_t n,
                                    RandomStream& rng) {
    if (n < 1) throw InvalidParameter("sample_mu: n must be >= 1");
    std::vector<TangentState> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ChartPoint p = sample_base(m, spec.base_potential, rng);
        out.push_back({p.chart_id, p.coords, sample_fibre(m, spec, p, rng)});
    }
    return out;
}

std::vector<FibreNode> fibre_rule_at(const AtlasManifold& m, const BundleMeasureSpec& spec, const ChartPoint& p,
                                     const QuadratureSpec& quad) {
    const int d = static_cast<int>(p.coords.size());
    const Mat L = frame(m, p);
    std::vector<FibreNode> out;
    auto rule = quad.fibre_rule;
    if (rule == QuadratureSpec::FibreRule::automatic) {
        if (spec.fibre == FibreKind::gaussian) {
            rule = QuadratureSpec::FibreRule::gauss_hermite;
        } else {
            rule = d == 3 ? QuadratureSpec::FibreRule::sphere_grid : QuadratureSpec::FibreRule::circle_grid;
        }
    }
    if ((rule == QuadratureSpec::FibreRule::gauss_hermite) != (spec.fibre == FibreKind::gaussian)) {
        throw InvalidParameter("fibre quadrature rule does not match the fibre measure");
    }
    switch (rule) {
    case QuadratureSpec::FibreRule::gauss_hermite: {
        // E f(L xi / sqrt(beta)), xi ~ N(0, I), via x = xi / sqrt(2).
        const GaussRule gh = gauss_hermite(quad.hermite_order);
        const int n = quad.hermite_order;
        const double scale = std::sqrt(2.0 / spec.beta);
        const double norm = std::pow(std::numbers::pi, -0.5 * d);
        std::vector<int> idx(d, 0);
        for (;;) {
            Vec xi(d);
            double w = norm;
            for (int i = 0; i < d; ++i) {
                xi[i] = scale * gh.nodes[idx[i]];
                w *= gh.weights[idx[i]];
            }
            out.push_back({L * xi, w});
            int k = 0;
            while (k < d && ++idx[k] == n) idx[k++] = 0;
            if (k == d) break;
        }
        break;
    }
    case QuadratureSpec::FibreRule::circle_grid: {
        if (d == 1) {
            out.push_back({L.col(0), 0.5});
            out.push_back({-L.col(0), 0.5});
            break;
        }
        if (d != 2) throw InvalidParameter("circle fibre grid needs dimension 2");
        const int n = quad.circle_n;
        for (int j = 0; j < n; ++j) {
            const double t = 2.0 * std::numbers::pi * j / n;
            out.push_back({L.col(0) * std::cos(t) + L.col(1) * std::sin(t), 1.0 / n});
        }
        break;
    }
    case QuadratureSpec::FibreRule::sphere_grid: {
        if (d != 3) throw InvalidParameter("sphere fibre grid needs dimension 3");
        const GaussRule gl = gauss_legendre(quad.sphere_n_theta);
        const int n_phi = quad.sphere_n_phi;
        for (int i = 0; i < quad.sphere_n_theta; ++i) {
            const double c = gl.nodes[i];
            const double r = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int j = 0; j < n_phi; ++j) {
                const double t = 2.0 * std::numbers::pi * (j + 0.5) / n_phi;
                const Vec v = L.col(0) * (r * std::cos(t)) + L.col(1) * (r * std::sin(t)) + L.col(2) * c;
                out.push_back({v, 0.5 * gl.weights[i] / n_phi});
            }
        }
        break;
    }
    case QuadratureSpec::FibreRule::automatic:
        break;
    }
    return out;
}

double fibrewise_average(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                         const ChartPoint& p, const QuadratureSpec& quad) {
    const auto nodes = fibre_rule_at(m, spec, p, quad);
    std::vector<double> vals(nodes.size()), ws(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        vals[i] = f(TangentState{p.chart_id, p.coords, nodes[i].v});
        ws[i] = nodes[i].weight;
    }
    return kernels::dot(vals, ws);
}

std::vector<std::pair<ChartPoint, double>> base_rule(const AtlasManifold& m, const BundleMeasureSpec& spec, int n) {
    auto rule = volume_rule(m, n);
    double total = 0.0;
    for (auto& [p, w] : rule) {
        w *= std::exp(-spec.base_potential(p));
        total += w;
    }
    for (auto& entry : rule) entry.second /= total;
    return rule;
}

Estimate integrate_mu(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                      const QuadratureSpec& quad) {
    quad.validate();
    if (quad.base_rule == QuadratureSpec::BaseRule::grid) {
        auto at = [&](int n) {
            const auto rule = base_rule(m, spec, n);
            std::vector<double> vals(rule.size()), ws(rule.size());
            for (std::size_t i = 0; i < rule.size(); ++i) {
                vals[i] = fibrewise_average(m, spec, f, rule[i].first, quad);
                ws[i] = rule[i].second;
            }
            return kernels::dot(vals, ws);
        };
        const double fine = at(quad.base_n);
        const double coarse = at(std::max(4, quad.base_n / 2));
        return {fine, std::abs(fine - coarse)};
    }
    RandomStream rng(quad.mc_seed, 0);
    std::vector<double> vals(static_cast<std::size_t>(quad.base_n));
    for (auto& val : vals) {
        const ChartPoint p = sample_base(m, spec.base_potential, rng);
        val = fibrewise_average(m, spec, f, p, quad);
    }
    const double n = static_cast<double>(vals.size());
    const kernels::Moments mom = kernels::centered_moments(vals, 0.0);
    const double mean = mom.sum / n;
    const double var = std::max(0.0, (mom.sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

} // namespace geolangevin
