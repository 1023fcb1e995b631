#pragma once

#include <functional>
#include <vector>

#include <Eigen/Sparse>

#include "geolangevin/bundle.hpp"
#include "geolangevin/dynamics.hpp"
#include "geolangevin/measures.hpp"

namespace geolangevin {

/// Scalar function on the base manifold.
using ScalarField = std::function<double(const ChartPoint&)>;

/// Coordinate differential by central differences with one Richardson step.
Vec field_differential(const ScalarField& f, const ChartPoint& p, double step = 1e-4);
Mat field_coordinate_hessian(const ScalarField& f, const ChartPoint& p, double step = 1e-4);

/// Delta_g f = g^{ij} (d_ij f - Gamma^k_ij d_k f).
double laplace_beltrami_fd(const AtlasManifold& m, const ScalarField& f, const ChartPoint& p);

/// Delta_g f - g(grad Phi, grad f).
double weighted_laplacian_fd(const AtlasManifold& m, const PotentialSpec& phi, const ScalarField& f,
                             const ChartPoint& p);

/// Kolmogorov generator applied by finite differences (step 1e-4, one Richardson step).
/// Langevin: S_g f - grad Psi . d_v f + (alpha/beta) Delta_v f - alpha C f.
/// fld:      S_g f - tlift(grad Psi) f + (sigma^2/2) Delta_S f.
double apply_generator_fd(const AtlasManifold& m, const ModelParams& model, const BundleFunction& f,
                          const TangentState& s, double step = 1e-4);

/// Antisymmetric part A of the generator.
/// Langevin: -S_g f + grad Psi . d_v f.  fld (d >= 2): -S_g f + (1/(d-1)) tlift(grad Psi) f.
double apply_antisymmetric_fd(const AtlasManifold& m, const ModelParams& model, const BundleFunction& f,
                              const TangentState& s, double step = 1e-4);

/// f(s) = f0(x) g0(v).
BundleFunction product_test_function(ScalarField f0, FibreFunction g0);

/// |E_nu[APf]| at p with APf(v) = -g(v, grad E_nu f).
double check_pap_zero(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                      const ChartPoint& p, const QuadratureSpec& quad = {});

struct Pa2pReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double rel_error = 0.0;
};

/// lhs: fibre quadrature of A^2 applied to the vertical lift of f0 (nested FD).
/// rhs: c (Delta_g f0 - g(grad Phi, grad f0)) with c = 1/beta (Langevin) or 1/d (fld).
Pa2pReport check_pa2p(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                      const ScalarField& f0, const ChartPoint& p, const QuadratureSpec& quad = {});

/// Prefactor c of PA^2P = c Delta_w: 1/beta or 1/d.
double pa2p_prefactor(const ModelParams& model, int dim);

struct IbpReport {
    double laplacian_term = 0.0;  // int (Delta_w f0) g0 dmu_base
    double gradient_term = 0.0;   // int g(grad f0, grad g0) dmu_base
    double residual = 0.0;        // |sum of the two|
};

IbpReport check_ibp(const AtlasManifold& m, const BundleMeasureSpec& spec, const ScalarField& f0,
                    const ScalarField& g0, int grid_n = 128);

/// Lambda_m: alpha (Langevin) or (d-1) sigma^2 / 2 (fld).
double microscopic_constant(const ModelParams& model, int dim);
/// Lambda_M: Lambda / beta (Langevin) or Lambda / d (fld).
double macroscopic_constant(double lambda, const ModelParams& model, int dim);
/// c1: alpha / 2 (Langevin) or (d-1) sigma^2 / 4 (fld).
double c1_constant(const ModelParams& model, int dim);

/// Finite-volume discretization of -Delta_w on the compact patch of m.
struct FvGrid {
    int n_a = 0;
    int n_b = 0;
    std::vector<ChartPoint> centers;
    std::vector<double> mass;  // rho sqrt(det g) da db at cell centres
    Eigen::SparseMatrix<double> stiffness;
};

FvGrid build_fv_grid(const AtlasManifold& m, const PotentialSpec& phi, int grid_n);

/// Smallest nonzero generalized eigenvalue of the weighted Laplacian
/// (stiffness against mass) on an n x (n * aspect) cell grid.
double estimate_poincare(const AtlasManifold& m, const PotentialSpec& phi, int grid_n = 64);

struct DmsConstants {
    double lambda_m = 0.0;
    double lambda_M = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
};

struct RateBundle {
    double kappa1 = 1.0;
    double kappa2 = 0.0;
    double epsilon = 0.0;
};

/// Upper end of the admissible mixing weights: Q(eps) is positive definite
/// exactly for 0 < eps < dms_epsilon_max(k).
double dms_epsilon_max(const DmsConstants& k);

/// kappa2(eps) = lambda_min(Q(eps)) / (1 + eps) with
/// Q(eps) = [[Lm - eps, -eps c / 2], [-eps c / 2, eps LM / (1 + LM)]], c = c1 + c2.
double dms_kappa2(const DmsConstants& k, double eps);

/// Maximizes kappa2(eps) over the admissible range; kappa1 = sqrt((1+eps)/(1-eps)).
RateBundle dms_rate(const DmsConstants& k);

/// Empirical sup over the family of |BA(I-P)f| / |(I-P)f|, with
/// BA(I-P)f = -(I - c Delta_w)^{-1} P A^2 (I-P) f solved on the finite-volume
/// grid. A lower-bound witness only, not a certified constant. Functions with
/// |(I-P)f| below 1e-10 are skipped.
double estimate_c2(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                   const std::vector<BundleFunction>& family, int grid_n = 24, int hermite_order = 8);

struct DecayCurve {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> stderr_;
    std::size_t n_traj = 0;
    double mean = 0.0;  // E_mu g used for centring
};

/// Stationary autocovariance C(t) = E[g~(eta_0) g~(eta_t)] with eta_0 ~ mu,
/// g~ = g - E_mu g, and batch-means standard errors. t = 0 is always included.
DecayCurve semigroup_decay(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                           const BundleFunction& g, const std::vector<double>& ts, std::size_t n_traj,
                           const IntegratorConfig& cfg, int batches = 20);

struct RateFit {
    double kappa2_hat = 0.0;
    double log_prefactor = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
    std::vector<double> fit_window;  // times that passed the 3-sigma filter
};

/// Weighted least squares of log|C(t)| against t over points with |value| > 3 stderr.
RateFit fit_exponential_rate(const DecayCurve& curve);

struct TimeAverageRow {
    double t = 0.0;
    double lhs = 0.0;
    double lhs_stderr = 0.0;
    double rhs = 0.0;
    bool violated = false;  // lhs - 2 stderr > rhs
};

struct TimeAverageReport {
    std::vector<TimeAverageRow> rows;
    double f_norm = 0.0;        // |f - E_mu f| in L2(mu)
    double loglog_slope = 0.0;  // fitted slope of log lhs against log t
    bool all_within_bound = true;
};

/// Right-hand side of the ergodic-average bound:
/// (2 / sqrt t) sqrt(2 kappa1 / kappa2 (1 - e^{-t kappa2})) |f - E f|.
double time_average_bound(double t, const RateBundle& rates, double f_norm);

/// L2(P) distance between the time average (1/t) int_0^t f(eta_s) ds and
/// E_mu f, for eta_0 ~ mu, compared with the bound. All t share one ensemble.
TimeAverageReport time_average_check(const AtlasManifold& m, const BundleMeasureSpec& spec,
                                     const ModelParams& model, const BundleFunction& f,
                                     const std::vector<double>& t_grid, std::size_t n_traj,
                                     const RateBundle& rates, const IntegratorConfig& cfg);

struct P3Report {
    double c_hat = 0.0;
    ChartPoint worst_point;
};

/// sup over samples of |Hess_g Phi|_F / (1 + |grad Phi|_g).
P3Report check_p3(const PotentialSpec& phi, const AtlasManifold& m, const std::vector<ChartPoint>& points);

/// Euclidean fld potential condition, per point x:
/// | int <grad_S U_z, grad_S (Psi(x) g0)> dnu - (d-1) int <v, grad Psi / |grad Psi|> g0 dnu |
/// with U_z(v) = <v, z>, z = grad Psi / (Psi |grad Psi|). Returns the max over points.
double check_fld_potential_condition_euclidean(const PotentialSpec& psi, const std::vector<Vec>& points,
                                               const FibreFunction& g0, int fibre_n = 256);

} // namespace geolangevin
