#pragma once

#include <cstdint>
#include <vector>

#include "geolangevin/bundle.hpp"
#include "geolangevin/dynamics.hpp"
#include "geolangevin/potential.hpp"
#include "geolangevin/rng.hpp"

namespace geolangevin {

enum class FibreKind { gaussian, uniform_sphere };

/// Invariant bundle measure: e^{-Phi} vol_g on the base times a fibre law.
/// The Gaussian fibre has covariance beta^{-1} I in a g-orthonormal frame.
struct BundleMeasureSpec {
    PotentialSpec base_potential = zero_potential();  // Phi
    FibreKind fibre = FibreKind::gaussian;
    double beta = 1.0;
    // Partition function int e^{-Phi} dvol_g and its estimated error.
    double normalization = 1.0;
    double normalization_error = 0.0;
};

struct QuadratureSpec {
    enum class BaseRule { grid, mc };
    enum class FibreRule { automatic, gauss_hermite, sphere_grid, circle_grid };

    BaseRule base_rule = BaseRule::grid;
    int base_n = 64;            // grid points per axis, or MC sample count
    std::uint64_t mc_seed = 0;
    FibreRule fibre_rule = FibreRule::automatic;
    int hermite_order = 20;
    int sphere_n_theta = 64;
    int sphere_n_phi = 32;
    int circle_n = 256;

    void validate() const;
};

/// Measure of the model: Phi = beta Psi with a Gaussian fibre (Langevin) or
/// Phi = Psi with the uniform unit sphere (fld). Computes the normalization.
BundleMeasureSpec bundle_measure(const AtlasManifold& m, const ModelParams& model);

/// Base partition function with an error estimate (two resolutions). On
/// compact manifolds the patch volume rule is used; otherwise a tensor
/// Gauss-Legendre rule over the declared sampling boxes.
std::pair<double, double> base_partition(const AtlasManifold& m, const PotentialSpec& phi, int n = 64);

/// Surface area of the unit sphere in R^d.
double unit_sphere_area(int d);

/// Density of mu in chart coordinates: with respect to dx dv (Gaussian fibre)
/// or dx times the g-surface measure of the unit fibre (sphere fibre).
double mu_density_chart(const AtlasManifold& m, const BundleMeasureSpec& spec, const TangentState& s);

/// Exact i.i.d. samples from mu.
std::vector<TangentState> sample_mu(const AtlasManifold& m, const BundleMeasureSpec& spec, std::size_t n,
                                    RandomStream& rng);

/// One exact base sample from e^{-Phi} vol_g / Z.
ChartPoint sample_base(const AtlasManifold& m, const PotentialSpec& phi, RandomStream& rng);

/// One fibre sample at p.
Vec sample_fibre(const AtlasManifold& m, const BundleMeasureSpec& spec, const ChartPoint& p, RandomStream& rng);

struct FibreNode {
    Vec v;
    double weight;
};

/// Fibre quadrature nodes at p; weights sum to 1.
std::vector<FibreNode> fibre_rule_at(const AtlasManifold& m, const BundleMeasureSpec& spec, const ChartPoint& p,
                                     const QuadratureSpec& quad = {});

/// E_nu f over the fibre at p.
double fibrewise_average(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                         const ChartPoint& p, const QuadratureSpec& quad = {});

struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

/// Base quadrature nodes with weights summing to 1 against e^{-Phi} vol_g / Z.
/// Grid rules only.
std::vector<std::pair<ChartPoint, double>> base_rule(const AtlasManifold& m, const BundleMeasureSpec& spec, int n);

/// int f dmu. Grid: base rule composed with the fibre rule, error from the
/// half-resolution rule. MC: exact base samples with fibre quadrature, error
/// is the standard error.
Estimate integrate_mu(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                      const QuadratureSpec& quad = {});

} // namespace geolangevin
