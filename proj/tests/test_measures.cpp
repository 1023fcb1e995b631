#include <cmath>
#include <numbers>

#include <doctest.h>

#include "geolangevin/errors.hpp"
#include "geolangevin/measures.hpp"

using namespace geolangevin;

namespace {

constexpr double kPi = std::numbers::pi;

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

} // namespace

TEST_CASE("unit sphere areas") {
    CHECK(unit_sphere_area(1) == doctest::Approx(2.0));
    CHECK(unit_sphere_area(2) == doctest::Approx(2.0 * kPi));
    CHECK(unit_sphere_area(3) == doctest::Approx(4.0 * kPi));
}

TEST_CASE("partition functions against closed forms") {
    const AtlasManifold t = flat_torus2();
    CHECK(bundle_measure(t, FldParams(1.0, zero_potential())).normalization == doctest::Approx(4 * kPi * kPi));
    const AtlasManifold s = sphere2_stereographic();
    CHECK(bundle_measure(s, FldParams(1.0, zero_potential())).normalization == doctest::Approx(4 * kPi).epsilon(1e-10));
    // int_T e^{-sin x1} = 2 pi * 2 pi I0(1)
    const double i0 = 1.2660658777520082;
    const BundleMeasureSpec spec = bundle_measure(t, FldParams(1.0, make_potential(t, "sin_x1")));
    CHECK(spec.normalization == doctest::Approx(4 * kPi * kPi * i0).epsilon(1e-12));
}

TEST_CASE("Gaussian fibre moments in the metric frame") {
    const AtlasManifold m = graph_surface(height_function("paraboloid", 1.0));
    const double beta = 2.0;
    const LangevinParams model(1.0, beta, zero_potential());
    BundleMeasureSpec spec;
    spec.beta = beta;
    const ChartPoint p{0, vec2(0.6, -0.3)};
    const Mat ginv = metric_at(m, p).inverse();
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const BundleFunction f = [i, j](const TangentState& s) { return s.v[i] * s.v[j]; };
            CHECK(fibrewise_average(m, spec, f, p) == doctest::Approx(ginv(i, j) / beta).epsilon(1e-12));
        }
    }
    const auto nodes = fibre_rule_at(m, spec, p);
    double w = 0;
    for (const auto& n : nodes) w += n.weight;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-13));
    (void)model;
}

TEST_CASE("sphere and circle fibre rules") {
    BundleMeasureSpec spec;
    spec.fibre = FibreKind::uniform_sphere;
    const AtlasManifold e3 = euclidean(3);
    const ChartPoint p{0, Vec::Zero(3)};
    const BundleFunction z2 = [](const TangentState& s) { return s.v[2] * s.v[2]; };
    const BundleFunction z4 = [](const TangentState& s) { return std::pow(s.v[2], 4); };
    CHECK(fibrewise_average(e3, spec, z2, p) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(fibrewise_average(e3, spec, z4, p) == doctest::Approx(1.0 / 5.0).epsilon(1e-12));
    const AtlasManifold t = flat_torus2();
    const BundleFunction c2 = [](const TangentState& s) { return s.v[0] * s.v[0]; };
    CHECK(fibrewise_average(t, spec, c2, {0, vec2(1, 1)}) == doctest::Approx(0.5).epsilon(1e-13));
    QuadratureSpec bad;
    bad.circle_n = 2;
    CHECK_THROWS_AS(bad.validate(), InvalidParameter);
}

TEST_CASE("integrals against mu") {
    const AtlasManifold t = flat_torus2();
    const LangevinParams model(1.0, 2.0, make_potential(t, "sin_x1"));
    const BundleMeasureSpec spec = bundle_measure(t, model);
    const BundleFunction one = [](const TangentState&) { return 1.0; };
    CHECK(integrate_mu(t, spec, one).value == doctest::Approx(1.0).epsilon(1e-13));
    const BundleFunction v2 = [](const TangentState& s) { return s.v.squaredNorm(); };
    CHECK(integrate_mu(t, spec, v2).value == doctest::Approx(1.0).epsilon(1e-12));  // d / beta
    // E[sin x1] under e^{-2 sin x1}: -I1(2)/I0(2)
    const double ratio = 1.5906368546373291 / 2.2795853023360673;
    const BundleFunction s1 = [](const TangentState& s) { return std::sin(s.x[0]); };
    const Estimate e = integrate_mu(t, spec, s1);
    CHECK(e.value == doctest::Approx(-ratio).epsilon(1e-10));
    CHECK(e.error < 1e-8);
}

TEST_CASE("exact samplers reproduce quadrature moments") {
    const AtlasManifold s = sphere2_stereographic();
    const BundleMeasureSpec spec = bundle_measure(s, FldParams(1.0, zero_potential()));
    RandomStream rng(5, 0);
    const auto samples = sample_mu(s, spec, 40000, rng);
    double z = 0, z2 = 0, speed = 0;
    for (const auto& st : samples) {
        const double h = sphere2_embed(st.point())[2];
        z += h;
        z2 += h * h;
        speed = std::max(speed, std::abs(norm_g(metric_at(s, st.point()), st.v) - 1.0));
    }
    z /= samples.size();
    z2 /= samples.size();
    CHECK(std::abs(z) < 4.0 * std::sqrt(1.0 / 3.0 / samples.size()));
    CHECK(std::abs(z2 - 1.0 / 3.0) < 4.0 * std::sqrt(4.0 / 45.0 / samples.size()));
    CHECK(speed < 1e-12);

    const AtlasManifold line = euclidean(1);
    const AtlasManifold boxed = [&] {
        AtlasManifold m = euclidean(1);
        SamplingBox b;
        b.lo = Vec::Constant(1, -8.0);
        b.hi = Vec::Constant(1, 8.0);
        m.sampling_boxes.push_back(b);
        return m;
    }();
    const LangevinParams ou(1.0, 1.0, make_potential(line, "quadratic"));
    const BundleMeasureSpec gs = bundle_measure(boxed, ou);
    CHECK(gs.normalization == doctest::Approx(std::sqrt(2 * kPi)).epsilon(1e-10));
    const auto xs = sample_mu(boxed, gs, 40000, rng);
    double x2 = 0, v2 = 0;
    for (const auto& st : xs) {
        x2 += st.x[0] * st.x[0];
        v2 += st.v[0] * st.v[0];
    }
    CHECK(std::abs(x2 / xs.size() - 1.0) < 4.0 * std::sqrt(2.0 / xs.size()));
    CHECK(std::abs(v2 / xs.size() - 1.0) < 4.0 * std::sqrt(2.0 / xs.size()));
}

TEST_CASE("base sampling needs a finite lower bound") {
    AtlasManifold m = euclidean(1);
    SamplingBox b;
    b.lo = Vec::Constant(1, -1.0);
    b.hi = Vec::Constant(1, 1.0);
    m.sampling_boxes.push_back(b);
    PotentialSpec p = make_potential(m, "quadratic");
    p.lower_bound = -std::numeric_limits<double>::infinity();
    RandomStream rng(1, 0);
    CHECK_THROWS_AS(sample_base(m, p, rng), InvalidParameter);
}
