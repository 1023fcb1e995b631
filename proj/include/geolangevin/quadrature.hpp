#pragma once

#include <vector>

namespace geolangevin {

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Physicists' Gauss-Hermite rule: sum w_i f(x_i) ~ int f(x) e^{-x^2} dx.
GaussRule gauss_hermite(int order);

/// Gauss-Legendre rule on [-1, 1].
GaussRule gauss_legendre(int order);

} // namespace geolangevin
