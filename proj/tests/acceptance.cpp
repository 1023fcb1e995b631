// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "geolangevin/analysis.hpp"
#include "geolangevin/dynamics.hpp"
#include "geolangevin/measures.hpp"

using namespace geolangevin;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool passed;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

double chi_square_p(const std::vector<double>& counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    const double expected = total / static_cast<double>(counts.size());
    double stat = 0.0;
    for (double c : counts) stat += (c - expected) * (c - expected) / expected;
    boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

// Random state with chart coordinates from `coords` and a g-frame Gaussian velocity.
TangentState random_state(const AtlasManifold& m, RandomStream& rng, const std::function<Vec()>& coords,
                          int chart, bool unit) {
    ChartPoint p{chart, coords()};
    Vec v = orthonormal_frame_at(m, p) * rng.gaussian_vec(m.dimension);
    if (unit) v /= norm_g(metric_at(m, p), v);
    return {chart, p.coords, v};
}

Vec disk_point(RandomStream& rng, double radius) {
    const double r = radius * std::sqrt(rng.uniform());
    const double t = 2.0 * kPi * rng.uniform();
    return vec2(r * std::cos(t), r * std::sin(t));
}

Outcome criterion_constants() {
    const LangevinParams lang1(1.0, 1.0, zero_potential());
    const LangevinParams lang2(1.0, 2.0, zero_potential());
    const FldParams fld1(1.0, zero_potential());
    const FldParams fld2(2.0, zero_potential());
    const bool ok = microscopic_constant(lang1, 2) == 1.0 && microscopic_constant(fld1, 2) == 0.5 &&
                    microscopic_constant(fld2, 3) == 4.0 && macroscopic_constant(1.0, lang2, 2) == 0.5 &&
                    macroscopic_constant(1.0, fld1, 2) == 0.5 && c1_constant(lang1, 2) == 0.5 &&
                    c1_constant(fld1, 2) == 0.25 && c1_constant(fld2, 3) == 2.0;
    return {ok, "Lm, LM, c1 for both models, exact comparison"};
}

Outcome criterion_liouville() {
    RandomStream rng(11, 0);
    double worst = 0.0;
    const AtlasManifold sphere = sphere2_stereographic();
    for (int i = 0; i < 1000; ++i) {
        const int chart = i % 2;
        const TangentState s = random_state(sphere, rng, [&] { return disk_point(rng, 1.5); }, chart, false);
        worst = std::max(worst, std::abs(spray_divergence_fd(sphere, s)));
    }
    for (const char* h : {"paraboloid", "sine_sheet"}) {
        const AtlasManifold graph = graph_surface(height_function(h, 0.7, 1.3));
        for (int i = 0; i < 500; ++i) {
            const TangentState s = random_state(graph, rng, [&] { return rng.gaussian_vec(2); }, 0, false);
            worst = std::max(worst, std::abs(spray_divergence_fd(graph, s)));
        }
    }
    return {worst < 1e-5, fmt("max |div S| = %.3e over 2000 states (tol 1e-5)", worst)};
}

Outcome criterion_eigenrelation() {
    RandomStream rng(12, 0);
    double worst = 0.0;
    auto check = [&](const AtlasManifold& m, const std::function<Vec()>& coords, int chart) {
        const int d = m.dimension;
        for (int i = 0; i < 500; ++i) {
            const TangentState s = random_state(m, rng, coords, chart, true);
            const Mat g = metric_at(m, s.point());
            const Vec z = rng.gaussian_vec(d);
            const FibreFunction f = [&](const Vec& w) { return w.dot(g * z); };
            worst = std::max(worst, std::abs(spherical_laplacian_fd(m, s, f) + (d - 1) * f(s.v)));
        }
    };
    const AtlasManifold sphere = sphere2_stereographic();
    check(sphere, [&] { return disk_point(rng, 1.5); }, 0);
    const AtlasManifold e3 = euclidean(3);
    check(e3, [&] { return rng.gaussian_vec(3); }, 0);
    const AtlasManifold graph = graph_surface(height_function("sine_sheet", 0.5, 1.0));
    check(graph, [&] { return rng.gaussian_vec(2); }, 0);
    return {worst < 1e-3, fmt("max |Delta_S g(v,z) + (d-1) g(v,z)| = %.3e, d in {2,3} (tol 1e-3)", worst)};
}

// f(x, v) = f0(x) p(v) with random trigonometric f0 and a random cubic p.
BundleFunction random_test_function(RandomStream& rng, int d) {
    const double a = rng.gaussian(), b = rng.gaussian(), c = rng.gaussian();
    Vec lin = rng.gaussian_vec(d), quad = rng.gaussian_vec(d), cub = rng.gaussian_vec(d);
    const double c0 = rng.gaussian();
    return [=](const TangentState& s) {
        const double f0 = a * std::cos(s.x[0] + b) + c * std::sin(s.x[d - 1]) + 0.1 * s.x.squaredNorm();
        double p = c0;
        for (int i = 0; i < d; ++i) {
            p += lin[i] * s.v[i] + quad[i] * s.v[i] * s.v[(i + 1) % d] + cub[i] * s.v[i] * s.v[i] * s.v[i];
        }
        return f0 * p;
    };
}

Outcome criterion_pap() {
    RandomStream rng(13, 0);
    double worst_gauss = 0.0, worst_sphere = 0.0;
    QuadratureSpec quad;  // Gauss-Hermite 20, sphere grid 64 x 32

    const AtlasManifold torus = flat_torus2();
    const PotentialSpec psi = make_potential(torus, "sin_x1");
    const BundleMeasureSpec gauss = bundle_measure(torus, LangevinParams(1.0, 2.0, psi));
    const AtlasManifold e3 = euclidean(3);
    const BundleMeasureSpec sphere = bundle_measure(e3, FldParams(1.0, make_potential(e3, "quadratic")));
    for (int i = 0; i < 10; ++i) {
        const ChartPoint p{0, vec2(2.0 * kPi * rng.uniform(), 2.0 * kPi * rng.uniform())};
        worst_gauss = std::max(worst_gauss, check_pap_zero(torus, gauss, random_test_function(rng, 2), p, quad));
        const ChartPoint q{0, rng.gaussian_vec(3)};
        worst_sphere = std::max(worst_sphere, check_pap_zero(e3, sphere, random_test_function(rng, 3), q, quad));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "gaussian max %.3e (tol 1e-8), sphere grid max %.3e (tol 1e-6)", worst_gauss,
                  worst_sphere);
    return {worst_gauss < 1e-8 && worst_sphere < 1e-6, buf};
}

Outcome criterion_pa2p() {
    const AtlasManifold torus = flat_torus2();
    const PotentialSpec psi = make_potential(torus, "sin_x1");
    const ModelParams lang = LangevinParams(1.0, 1.0, psi);
    const ModelParams fld = FldParams(1.0, psi);
    const BundleMeasureSpec lang_spec = bundle_measure(torus, lang);
    const BundleMeasureSpec fld_spec = bundle_measure(torus, fld);
    const ScalarField f0 = [](const ChartPoint& p) { return std::cos(p.coords[1]); };
    RandomStream rng(14, 0);
    double worst = 0.0;
    bool distinguished = true;
    for (int i = 0; i < 10; ++i) {
        const ChartPoint p{0, vec2(2.0 * kPi * rng.uniform(), 2.0 * kPi * rng.uniform())};
        const Pa2pReport a = check_pa2p(torus, lang_spec, lang, f0, p);
        const Pa2pReport b = check_pa2p(torus, fld_spec, fld, f0, p);
        worst = std::max({worst, a.rel_error, b.rel_error});
        // Closed forms: -(1/beta) cos x2 with beta = 1 and -(1/2) cos x2.
        const double lang_pred = -std::cos(p.coords[1]);
        const double fld_pred = -0.5 * std::cos(p.coords[1]);
        if (std::abs(lang_pred) > 1e-3) {
            distinguished = distinguished && std::abs(a.lhs - lang_pred) < 1e-3 * std::abs(lang_pred) &&
                            std::abs(a.lhs - fld_pred) > 0.1 * std::abs(lang_pred) &&
                            std::abs(b.lhs - fld_pred) < 1e-3 * std::abs(fld_pred) &&
                            std::abs(b.lhs - lang_pred) > 0.1 * std::abs(lang_pred);
        }
    }
    return {worst < 1e-3 && distinguished,
            fmt("max relative error %.3e over 10 points, both models (tol 1e-3); prefactors 1/beta and 1/d separated",
                worst)};
}

Outcome criterion_ibp() {
    const AtlasManifold torus = flat_torus2();
    const PotentialSpec psi = make_potential(torus, "sin_x1");
    const BundleMeasureSpec spec = bundle_measure(torus, FldParams(1.0, psi));
    const IbpReport r = check_ibp(
        torus, spec, [](const ChartPoint& p) { return std::cos(p.coords[1]); },
        [](const ChartPoint& p) { return std::sin(p.coords[0] + p.coords[1]); }, 128);
    return {r.residual < 1e-6, fmt("residual %.3e at 128^2 (tol 1e-6)", r.residual)};
}

Outcome criterion_stationarity() {
    const AtlasManifold line = euclidean(1);
    const LangevinParams model(1.0, 1.0, std::sqrt(2.0), make_potential(line, "quadratic"));
    constexpr std::size_t chains = 100;
    constexpr std::size_t per_chain = 1000;
    IntegratorConfig cfg;
    cfg.dt = 1e-2;
    const std::size_t burn = 1000;  // burn-in 10 time units
    cfg.t_final = static_cast<double>(burn + per_chain) * cfg.dt;
    cfg.seed = 7;
    std::vector<TangentState> inits(chains, TangentState{0, Vec::Zero(1), Vec::Zero(1)});
    // moments[k][chain]: chain means of x, x^2, x^3, x^4, v, v^2, v^3, v^4
    std::vector<std::vector<double>> sums(8, std::vector<double>(chains, 0.0));
    run_ensemble(line, inits, model, cfg, [&](std::size_t i, std::size_t r, double, const TangentState& s) {
        if (r <= burn) return;
        double px = 1.0, pv = 1.0;
        for (int k = 0; k < 4; ++k) {
            px *= s.x[0];
            pv *= s.v[0];
            sums[static_cast<std::size_t>(k)][i] += px;
            sums[static_cast<std::size_t>(4 + k)][i] += pv;
        }
    });
    const double exact[4] = {0.0, 1.0, 0.0, 3.0};
    double worst_z = 0.0;
    for (int k = 0; k < 8; ++k) {
        double mean = 0.0, sq = 0.0;
        for (double s : sums[static_cast<std::size_t>(k)]) {
            const double cm = s / per_chain;
            mean += cm;
            sq += cm * cm;
        }
        mean /= chains;
        const double var = (sq / chains - mean * mean) * chains / (chains - 1.0);
        const double se = std::sqrt(var / chains);
        worst_z = std::max(worst_z, std::abs(mean - exact[k % 4]) / se);
    }
    return {worst_z < 3.0, fmt("max |moment - N(0,1) moment| / MC sigma = %.2f over 8 moments of x, v (tol 3)",
                               worst_z)};
}

Outcome criterion_uniformity() {
    const AtlasManifold torus = flat_torus2();
    const FldParams model(1.0, zero_potential());
    constexpr std::size_t n = 100000;
    IntegratorConfig cfg;
    // The flat-torus chain leaves the uniform law invariant for any dt; T is
    // long enough that the slowest mode (rate about 0.35) is below MC noise.
    cfg.dt = 0.2;
    cfg.t_final = 40.0;
    cfg.record_stride = 200;
    cfg.seed = 8;
    // Every trajectory starts from one point and direction.
    std::vector<TangentState> inits(n, TangentState{0, vec2(1.0, 2.0), vec2(1.0, 0.0)});
    std::vector<double> pos(256, 0.0), ang(16, 0.0);
    std::vector<TangentState> finals(n);
    run_ensemble(torus, inits, model, cfg, [&](std::size_t i, std::size_t r, double, const TangentState& s) {
        if (r == 1) finals[i] = s;
    });
    for (const auto& s : finals) {
        const int a = std::min(15, static_cast<int>(s.x[0] / (2.0 * kPi) * 16));
        const int b = std::min(15, static_cast<int>(s.x[1] / (2.0 * kPi) * 16));
        pos[static_cast<std::size_t>(a * 16 + b)] += 1.0;
        const double theta = std::atan2(s.v[1], s.v[0]) + kPi;
        ang[static_cast<std::size_t>(std::min(15, static_cast<int>(theta / (2.0 * kPi) * 16)))] += 1.0;
    }
    const double p_pos = chi_square_p(pos);
    const double p_ang = chi_square_p(ang);
    char buf[160];
    std::snprintf(buf, sizeof buf, "chi-square p: position %.3f (16x16 bins), angle %.3f (16 bins); need > 0.01",
                  p_pos, p_ang);
    return {p_pos > 0.01 && p_ang > 0.01, buf};
}

Outcome criterion_decay() {
    const AtlasManifold torus = flat_torus2();
    const FldParams model(1.0, zero_potential());
    const BundleMeasureSpec spec = bundle_measure(torus, model);
    const BundleFunction g = [](const TangentState& s) { return std::cos(s.x[0]); };
    IntegratorConfig cfg;
    cfg.dt = 0.02;
    cfg.seed = 9;
    const DecayCurve curve = semigroup_decay(torus, spec, model, g, {0.5, 1.0, 2.0, 4.0, 8.0}, 10000, cfg);
    RateFit fit;
    try {
        fit = fit_exponential_rate(curve);
    } catch (const InsufficientSignal& e) {
        return {false, std::string("fit failed: ") + e.what()};
    }
    RateBundle rates;
    rates.kappa2 = fit.kappa2_hat;
    rates.kappa1 = std::max(1.0, std::exp(fit.log_prefactor) / curve.values.front());
    IntegratorConfig ta = cfg;
    ta.seed = 10;
    const TimeAverageReport report = time_average_check(torus, spec, model, g, {4.0, 16.0, 64.0}, 4000, rates, ta);
    const bool ok = fit.kappa2_hat > 0.0 && fit.r_squared > 0.9 && report.all_within_bound &&
                    report.loglog_slope >= -0.6 && report.loglog_slope <= -0.4;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "kappa2_hat %.4f, r^2 %.4f, kappa1 %.3f; bound held at t=4,16,64: %s; log-log slope %.3f "
                  "(need [-0.6,-0.4])",
                  fit.kappa2_hat, fit.r_squared, rates.kappa1, report.all_within_bound ? "yes" : "no",
                  report.loglog_slope);
    return {ok, buf};
}

Outcome criterion_poincare() {
    const AtlasManifold sphere = sphere2_stereographic();
    const AtlasManifold torus = flat_torus2();
    const PotentialSpec zero = zero_potential();
    const double s64 = estimate_poincare(sphere, zero, 64);
    const double s128 = estimate_poincare(sphere, zero, 128);
    const double t64 = estimate_poincare(torus, zero, 64);
    const double t128 = estimate_poincare(torus, zero, 128);
    const bool ok = std::abs(s64 - 2.0) < 0.1 && std::abs(t64 - 1.0) < 0.05 && std::abs(s64 - s128) < 0.05 * s128 &&
                    std::abs(t64 - t128) < 0.05 * t128;
    char buf[200];
    std::snprintf(buf, sizeof buf, "sphere %.5f (refined %.5f, expect 2 +- 5%%), torus %.5f (refined %.5f, expect 1 +- 5%%)",
                  s64, s128, t64, t128);
    return {ok, buf};
}

Outcome criterion_dms() {
    RandomStream rng(15, 0);
    auto draw = [&] { return std::exp(std::log(1e-2) + rng.uniform() * std::log(1e4)); };
    int positivity = 0, monotone = 0, homogeneous = 0;
    double worst_homog = 0.0;
    constexpr int n = 1000;
    for (int i = 0; i < n; ++i) {
        const DmsConstants k{draw(), draw(), draw(), draw()};
        const RateBundle r = dms_rate(k);
        if (r.kappa2 > 0.0 && r.kappa1 >= 1.0) ++positivity;
        DmsConstants up_m = k, up_M = k;
        up_m.lambda_m *= 1.5;
        up_M.lambda_M *= 1.5;
        if (dms_rate(up_m).kappa2 >= r.kappa2 * (1.0 - 1e-9) && dms_rate(up_M).kappa2 >= r.kappa2 * (1.0 - 1e-9)) {
            ++monotone;
        }
        const double t = std::exp(std::log(0.1) + rng.uniform() * std::log(100.0));
        const RateBundle scaled = dms_rate({t * k.lambda_m, t * k.lambda_M, t * k.c1, t * k.c2});
        const double dev = std::abs(scaled.kappa2 - t * r.kappa2) / (t * r.kappa2);
        worst_homog = std::max(worst_homog, dev);
        if (dev < 1e-6 && std::abs(scaled.epsilon - r.epsilon) < 1e-6) ++homogeneous;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "positivity %d/%d, monotone in Lm and LM %d/%d, homogeneous under common scaling %d/%d "
                  "(worst relative deviation %.3g)",
                  positivity, n, monotone, n, homogeneous, n, worst_homog);
    return {positivity == n && monotone == n && homogeneous == n, buf};
}

Outcome criterion_geodesic() {
    const AtlasManifold sphere = sphere2_stereographic();
    // Great circle in the x-z plane starting below the equator, heading north.
    const Eigen::Vector3d y0 = Eigen::Vector3d(1.0, 0.0, -0.4).normalized();
    const Eigen::Vector3d t0 = Eigen::Vector3d(0.4, 0.0, 1.0).normalized();
    ChartPoint p = sphere2_chart_point(y0);
    Mat J(3, 2);
    for (int i = 0; i < 2; ++i) J.col(i) = sphere2_push_velocity(p, Vec::Unit(2, i));
    Vec v = J.colPivHouseholderQr().solve(t0);
    const double dt = 1e-3;
    const auto steps = static_cast<std::size_t>(std::llround(kPi / dt));
    const double h = kPi / static_cast<double>(steps);
    int switches = 0;
    for (std::size_t k = 0; k < steps; ++k) {
        const GeodesicStepResult r = geodesic_step(sphere, p, v, h);
        if (r.chart_switch) ++switches;
        p = r.point;
        v = r.velocity;
    }
    // Closed form: y(t) = cos t y0 + sin t t0, so y(pi) = -y0.
    const double err = (sphere2_embed(p) + y0).norm();
    char buf[160];
    std::snprintf(buf, sizeof buf, "endpoint error %.3e after time pi with %d chart switches (tol 1e-6)", err, switches);
    return {err < 1e-6 && switches >= 1, buf};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"constant reproduction", criterion_constants},
        {"Liouville residual", criterion_liouville},
        {"spherical eigenvalue relation", criterion_eigenrelation},
        {"PAP = 0", criterion_pap},
        {"PA^2P identity", criterion_pa2p},
        {"weighted integration by parts", criterion_ibp},
        {"Euclidean stationarity", criterion_stationarity},
        {"torus fld uniformity", criterion_uniformity},
        {"exponential decay and ergodic bound", criterion_decay},
        {"Poincare estimates", criterion_poincare},
        {"DMS rate properties", criterion_dms},
        {"chart-switching geodesic accuracy", criterion_geodesic},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.passed) ++failures;
        std::printf("%s %2zu %s: %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
