#include <cmath>
#include <numbers>

#include <doctest.h>

#include "geolangevin/analysis.hpp"
#include "geolangevin/errors.hpp"

using namespace geolangevin;

namespace {

constexpr double kPi = std::numbers::pi;

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

} // namespace

TEST_CASE("model constants") {
    const LangevinParams lang(3.0, 2.0, zero_potential());
    const FldParams fld(2.0, zero_potential());
    CHECK(microscopic_constant(lang, 2) == 3.0);
    CHECK(macroscopic_constant(4.0, lang, 2) == 2.0);
    CHECK(c1_constant(lang, 2) == 1.5);
    CHECK(microscopic_constant(fld, 3) == 4.0);
    CHECK(macroscopic_constant(3.0, fld, 3) == 1.0);
    CHECK(c1_constant(fld, 2) == 1.0);
    CHECK(pa2p_prefactor(lang, 2) == 0.5);
    CHECK(pa2p_prefactor(fld, 3) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("Laplace-Beltrami on spherical harmonics") {
    const AtlasManifold s = sphere2_stereographic();
    const ScalarField z = [](const ChartPoint& p) { return sphere2_embed(p)[2]; };
    const ScalarField xy = [](const ChartPoint& p) {
        const auto y = sphere2_embed(p);
        return y[0] * y[1];
    };
    for (int chart : {0, 1}) {
        const ChartPoint p{chart, vec2(0.4, -0.3)};
        CHECK(laplace_beltrami_fd(s, z, p) == doctest::Approx(-2.0 * z(p)).epsilon(1e-6));
        CHECK(laplace_beltrami_fd(s, xy, p) == doctest::Approx(-6.0 * xy(p)).epsilon(1e-6));
    }
}

TEST_CASE("weighted Laplacian and generator of constants") {
    const AtlasManifold t = flat_torus2();
    const PotentialSpec psi = make_potential(t, "sin_x1");
    const ScalarField f = [](const ChartPoint& p) { return std::cos(p.coords[0]); };
    const ChartPoint p{0, vec2(0.7, 2.0)};
    // -cos x1 - (cos x1)(-sin x1) = -cos x1 + sin x1 cos x1
    CHECK(weighted_laplacian_fd(t, psi, f, p) ==
          doctest::Approx(-std::cos(0.7) + std::sin(0.7) * std::cos(0.7)).epsilon(1e-7));
    const BundleFunction one = [](const TangentState&) { return 1.0; };
    const TangentState st{0, p.coords, vec2(0.6, 0.8)};
    CHECK(std::abs(apply_generator_fd(t, LangevinParams(1.0, 1.0, psi), one, st)) < 1e-12);
    CHECK(std::abs(apply_generator_fd(t, FldParams(1.0, psi), one, st)) < 1e-12);
}

TEST_CASE("generator on a Gaussian fibre polynomial") {
    // Flat line, Psi = 0: L v^2 = (alpha/beta) 2 - alpha 2 v^2.
    const AtlasManifold line = euclidean(1);
    const LangevinParams model(0.5, 2.0, zero_potential());
    const BundleFunction f = [](const TangentState& s) { return s.v[0] * s.v[0]; };
    TangentState st{0, Vec::Constant(1, 0.3), Vec::Constant(1, 1.2)};
    CHECK(apply_generator_fd(line, model, f, st) == doctest::Approx(0.5 - 2 * 0.5 * 1.44).epsilon(1e-7));
}

TEST_CASE("PA^2P against the weighted Laplacian") {
    const AtlasManifold t = flat_torus2();
    const PotentialSpec psi = make_potential(t, "sin_x1");
    const ScalarField f0 = [](const ChartPoint& p) { return std::sin(p.coords[0] + p.coords[1]); };
    for (const ModelParams& model : {ModelParams(LangevinParams(1.0, 2.0, psi)), ModelParams(FldParams(1.0, psi))}) {
        const BundleMeasureSpec spec = bundle_measure(t, model);
        const Pa2pReport r = check_pa2p(t, spec, model, f0, {0, vec2(1.1, 0.4)});
        CHECK(r.rel_error < 1e-4);
    }
}

TEST_CASE("integration by parts on the torus") {
    const AtlasManifold t = flat_torus2();
    const BundleMeasureSpec spec = bundle_measure(t, LangevinParams(1.0, 1.0, make_potential(t, "sin_x1")));
    const IbpReport r = check_ibp(
        t, spec, [](const ChartPoint& p) { return std::cos(p.coords[0]); },
        [](const ChartPoint& p) { return std::cos(p.coords[0]) + std::sin(p.coords[1]); }, 64);
    CHECK(r.residual < 1e-6);
    CHECK(std::abs(r.laplacian_term) > 1e-3);
}

TEST_CASE("Poincare constants on small grids") {
    CHECK(estimate_poincare(flat_torus2(), zero_potential(), 32) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(estimate_poincare(sphere2_stereographic(), zero_potential(), 32) == doctest::Approx(2.0).epsilon(0.01));
    CHECK_THROWS_AS(estimate_poincare(euclidean(2), zero_potential(), 16), NonCompactBase);
}

TEST_CASE("DMS rate properties") {
    const DmsConstants k{1.0, 0.5, 0.5, 1.0};
    const double hi = dms_epsilon_max(k);
    CHECK(hi > 0.0);
    CHECK(dms_kappa2(k, 0.5 * hi) > 0.0);
    CHECK(dms_kappa2(k, 1.01 * hi) <= 0.0);
    CHECK(dms_kappa2(k, 1e-9) == doctest::Approx(0.0).epsilon(1e-6));
    const RateBundle r = dms_rate(k);
    CHECK(r.kappa2 > 0.0);
    CHECK(r.kappa1 >= 1.0);
    CHECK(r.kappa1 == doctest::Approx(std::sqrt((1 + r.epsilon) / (1 - r.epsilon))));
    for (double e : {0.1, 0.3, 0.7, 0.9}) CHECK(dms_kappa2(k, e * hi) <= r.kappa2 + 1e-12);
    DmsConstants bigger = k;
    bigger.lambda_m = 2.0;
    CHECK(dms_rate(bigger).kappa2 >= r.kappa2);
    CHECK_THROWS_AS(dms_rate({0.0, 1.0, 1.0, 1.0}), InfeasibleConstants);
}

TEST_CASE("exponential fit") {
    DecayCurve c;
    RandomStream rng(4, 0);
    for (double t : {0.0, 0.5, 1.0, 2.0, 3.0, 4.0}) {
        c.times.push_back(t);
        c.values.push_back(2.0 * std::exp(-0.7 * t) + 1e-4 * rng.gaussian());
        c.stderr_.push_back(1e-4);
    }
    const RateFit f = fit_exponential_rate(c);
    CHECK(f.kappa2_hat == doctest::Approx(0.7).epsilon(0.02 / 0.7));
    CHECK(f.r_squared > 0.999);
    DecayCurve scaled = c;
    for (auto& v : scaled.values) v *= 5.0;
    for (auto& s : scaled.stderr_) s *= 5.0;
    const RateFit g = fit_exponential_rate(scaled);
    CHECK(g.kappa2_hat == doctest::Approx(f.kappa2_hat).epsilon(1e-12));
    CHECK(g.log_prefactor == doctest::Approx(f.log_prefactor + std::log(5.0)).epsilon(1e-12));

    DecayCurve flat = c;
    for (auto& v : flat.values) v = 1.0;
    CHECK_THROWS_AS(fit_exponential_rate(flat), InsufficientSignal);
    DecayCurve short_curve = c;
    for (std::size_t i = 2; i < short_curve.values.size(); ++i) short_curve.values[i] = 0.0;
    CHECK_THROWS_AS(fit_exponential_rate(short_curve), InsufficientSignal);
}

TEST_CASE("stationary autocovariance at t = 0 is the variance") {
    const AtlasManifold t = flat_torus2();
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    cfg.seed = 21;
    const std::vector<BundleFunction> obs = {
        [](const TangentState& s) { return std::cos(s.x[0]); },
        [](const TangentState& s) { return std::sin(s.x[1]); },
        [](const TangentState& s) { return std::cos(s.x[0] + s.x[1]); },
        [](const TangentState& s) { return s.v[0]; },
        [](const TangentState& s) { return s.v[0] * s.v[1] + std::sin(s.x[0]); },
    };
    const PotentialSpec psi = make_potential(t, "sin_x1");
    for (const ModelParams& model : {ModelParams(LangevinParams(1.0, 1.0, psi)), ModelParams(FldParams(1.0, psi))}) {
        const BundleMeasureSpec spec = bundle_measure(t, model);
        for (const auto& g : obs) {
            const double mean = integrate_mu(t, spec, g).value;
            const double var =
                integrate_mu(t, spec, [&](const TangentState& s) { return std::pow(g(s) - mean, 2); }).value;
            const DecayCurve c = semigroup_decay(t, spec, model, g, {0.1}, 4000, cfg);
            CHECK(c.times.front() == 0.0);
            CHECK(std::abs(c.values.front() - var) < 3.0 * c.stderr_.front() + 1e-12);
        }
    }
    const BundleFunction one = [](const TangentState&) { return 1.0; };
    const BundleMeasureSpec spec = bundle_measure(t, FldParams(1.0, zero_potential()));
    const DecayCurve c = semigroup_decay(t, spec, FldParams(1.0, zero_potential()), one, {0.1, 0.2}, 1000, cfg);
    for (double v : c.values) CHECK(std::abs(v) < 1e-14);
    CHECK_THROWS_AS(semigroup_decay(t, spec, FldParams(1.0, zero_potential()), one, {0.1}, 999, cfg), InvalidParameter);
}

TEST_CASE("decay rate is unimodal in the fibre noise") {
    // Observed ordering: moderate noise mixes fastest; strong noise overdamps.
    const AtlasManifold t = flat_torus2();
    const BundleFunction g = [](const TangentState& s) { return std::cos(s.x[0]); };
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    cfg.seed = 31;
    std::vector<double> rates;
    for (double sigma : {0.5, 1.0, 2.0}) {
        const FldParams model(sigma, zero_potential());
        const BundleMeasureSpec spec = bundle_measure(t, model);
        const DecayCurve c = semigroup_decay(t, spec, model, g, {0.5, 1.0, 2.0, 4.0, 8.0}, 4000, cfg);
        rates.push_back(fit_exponential_rate(c).kappa2_hat);
    }
    CHECK(rates[1] > rates[0]);
    CHECK(rates[1] > rates[2]);
}

TEST_CASE("time-average bound") {
    const RateBundle r{1.2, 0.5, 0.1};
    CHECK(time_average_bound(4.0, r, 0.0) == 0.0);
    double prev = time_average_bound(2.0, r, 1.0);
    for (double t = 3.0; t < 50.0; t += 1.0) {
        const double b = time_average_bound(t, r, 1.0);
        CHECK(b < prev);
        prev = b;
    }
    const AtlasManifold t = flat_torus2();
    const FldParams model(1.0, zero_potential());
    const BundleMeasureSpec spec = bundle_measure(t, model);
    IntegratorConfig cfg;
    cfg.dt = 0.05;
    const TimeAverageReport rep = time_average_check(
        t, spec, model, [](const TangentState&) { return 3.0; }, {1.0, 2.0}, 200, r, cfg);
    for (const auto& row : rep.rows) CHECK(std::abs(row.lhs) < 1e-12);
    CHECK(rep.all_within_bound);
}

TEST_CASE("P3 ratio") {
    const AtlasManifold line = euclidean(1);
    std::vector<ChartPoint> pts;
    for (int i = -20; i <= 20; ++i) pts.push_back({0, Vec::Constant(1, 0.25 * i)});
    CHECK(check_p3(make_potential(line, "linear", {{"a", 2.0}}), line, pts).c_hat < 1e-6);
    const P3Report q = check_p3(make_potential(line, "quadratic"), line, pts);
    CHECK(q.c_hat <= 1.0 + 1e-6);
    CHECK(q.c_hat == doctest::Approx(1.0).epsilon(1e-5));  // attained at x = 0
    const AtlasManifold t = flat_torus2();
    std::vector<ChartPoint> grid, dense;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 4; ++j) grid.push_back({0, vec2(2 * kPi * i / 16, 2 * kPi * j / 4)});
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 4; ++j) dense.push_back({0, vec2(2 * kPi * i / 64, 2 * kPi * j / 4)});
    const double a = check_p3(make_potential(t, "sin_x1"), t, grid).c_hat;
    const double b = check_p3(make_potential(t, "sin_x1"), t, dense).c_hat;
    CHECK(std::abs(a - b) < 0.1 * b);
}

TEST_CASE("Euclidean fld potential condition") {
    const AtlasManifold e2 = euclidean(2);
    const PotentialSpec psi = make_potential(e2, "quadratic", {{"offset", 1.0}});
    std::vector<Vec> pts = {vec2(0.5, 0.1), vec2(-1.0, 2.0), vec2(3.0, -0.7)};
    const FibreFunction g0 = [](const Vec& v) { return v[0] + 0.3 * v[1] * v[1]; };
    CHECK(check_fld_potential_condition_euclidean(psi, pts, g0) < 1e-8);
    CHECK(check_fld_potential_condition_euclidean(psi, pts, [](const Vec&) { return 0.0; }) == 0.0);
    CHECK_THROWS_AS(check_fld_potential_condition_euclidean(psi, {vec2(0.0, 0.0)}, g0), DegenerateGradient);
}

TEST_CASE("c2 witness") {
    const AtlasManifold t = flat_torus2();
    const LangevinParams model(1.0, 1.0, zero_potential());
    const BundleMeasureSpec spec = bundle_measure(t, model);
    std::vector<BundleFunction> family = {
        [](const TangentState& s) { return s.v[0] * std::cos(s.x[0]); },
    };
    const double a = estimate_c2(t, spec, model, family, 16, 8);
    CHECK(a > 0.0);
    family.push_back([](const TangentState& s) { return s.v[1] * std::sin(2 * s.x[1]); });
    CHECK(estimate_c2(t, spec, model, family, 16, 8) >= a);
}
