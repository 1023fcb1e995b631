#pragma once

#include <functional>
#include <limits>
#include <map>
#include <string>

#include "geolangevin/geometry.hpp"

namespace geolangevin {

using ParamMap = std::map<std::string, double>;

/// Scalar potential on the base manifold.
struct PotentialSpec {
    std::string name = "zero";
    std::function<double(const ChartPoint&)> psi;
    // Optional coordinate components of grad_g Psi = g^{-1} dPsi.
    std::function<Vec(const ChartPoint&)> grad;
    // Declared infimum, used for rejection envelopes; -inf when unknown.
    double lower_bound = -std::numeric_limits<double>::infinity();
    bool constant = false;

    double operator()(const ChartPoint& p) const { return psi(p); }

    /// Potential multiplied by `factor` (Phi = beta Psi).
    PotentialSpec scaled(double factor) const;
    /// Potential plus a constant.
    PotentialSpec shifted(double offset) const;
};

/// Coordinate differential dPsi by central differences, h = 1e-5 (1 + |x|),
/// with one Richardson extrapolation.
Vec potential_differential(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p);

/// Coordinate components of grad_g Psi.
Vec potential_gradient(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p);

/// Coordinate Hessian d_i d_j Psi by central differences.
Mat potential_coordinate_hessian(const AtlasManifold& m, const PotentialSpec& pot, const ChartPoint& p);

PotentialSpec zero_potential();

/// Named registry: zero, quadratic {k, offset}, sin_x1 {amplitude}, cos_x2
/// {amplitude}, linear {a}, height {amplitude}. Every entry accepts `shift`.
PotentialSpec make_potential(const AtlasManifold& m, const std::string& name, const ParamMap& params = {});

bool potential_known(const std::string& name);

} // namespace geolangevin
