#pragma once

#include <string>

#include "geolangevin/bundle.hpp"
#include "geolangevin/potential.hpp"

namespace geolangevin {

struct ObservableSpec {
    std::string name;
    ParamMap params;
};

/// Named test functions on TM:
///   one, cos_x1, sin_x1, cos_x2, sin_x2          chart coordinates
///   x_power {component, power}, v_power {component, power}
///   embed {component}, height                   embedded coordinates
///   v_g_norm_sq                                 g(v, v)
///   v_angle_cos, v_angle_sin                    angle of v in the g-orthonormal frame (d = 2)
/// Components are 1-based. The returned function may refer to m, which must outlive it.
BundleFunction make_observable(const AtlasManifold& m, const ObservableSpec& spec);

bool observable_known(const std::string& name);

} // namespace geolangevin
