#include <cmath>
#include <numbers>

#include <doctest.h>

#include "geolangevin/quadrature.hpp"

using namespace geolangevin;

TEST_CASE("Gauss-Hermite integrates Gaussian moments exactly") {
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (int order : {5, 8, 20}) {
        const GaussRule r = gauss_hermite(order);
        double m0 = 0, m2 = 0, m4 = 0, m3 = 0;
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            const double x = r.nodes[i], w = r.weights[i];
            m0 += w;
            m2 += w * x * x;
            m3 += w * x * x * x;
            m4 += w * x * x * x * x;
        }
        CHECK(m0 == doctest::Approx(sqrt_pi).epsilon(1e-13));
        CHECK(m2 == doctest::Approx(sqrt_pi / 2).epsilon(1e-13));
        CHECK(std::abs(m3) < 1e-13);
        CHECK(m4 == doctest::Approx(3 * sqrt_pi / 4).epsilon(1e-12));
    }
}

TEST_CASE("Gauss-Legendre integrates polynomials up to degree 2n-1") {
    const GaussRule r = gauss_legendre(4);
    double i6 = 0, i7 = 0, i0 = 0;
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
        i0 += r.weights[k];
        i6 += r.weights[k] * std::pow(r.nodes[k], 6);
        i7 += r.weights[k] * std::pow(r.nodes[k], 7);
    }
    CHECK(i0 == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(i6 == doctest::Approx(2.0 / 7.0).epsilon(1e-13));
    CHECK(std::abs(i7) < 1e-14);
    const GaussRule big = gauss_legendre(64);
    double c = 0;
    for (std::size_t k = 0; k < big.nodes.size(); ++k) c += big.weights[k] * std::cos(big.nodes[k]);
    CHECK(c == doctest::Approx(2.0 * std::sin(1.0)).epsilon(1e-14));
}
