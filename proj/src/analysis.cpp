#include "geolangevin/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "geolangevin/errors.hpp"
#include "geolangevin/kernels.hpp"

namespace geolangevin {

namespace {

// Richardson-extrapolated central difference of a one-parameter family.
template <typename F>
double richardson_first(F&& along, double h) {
    auto central = [&](double e) { return (along(e) - along(-e)) / (2.0 * e); };
    return (4.0 * central(h) - central(2.0 * h)) / 3.0;
}

template <typename F>
double richardson_second(F&& along, double h) {
    const double mid = along(0.0);
    auto second = [&](double e) { return (along(e) - 2.0 * mid + along(-e)) / (e * e); };
    return (4.0 * second(h) - second(2.0 * h)) / 3.0;
}

double directional(const BundleFunction& f, const TangentState& s, const Vec& db, const Vec& dv, double h) {
    return richardson_first(
        [&](double e) {
            TangentState t = s;
            t.x += e * db;
            t.v += e * dv;
            return f(t);
        },
        h);
}

double fibre_directional(const BundleFunction& f, const TangentState& s, const Vec& dv, double h) {
    return directional(f, s, Vec::Zero(s.x.size()), dv, h);
}

double fibre_second(const BundleFunction& f, const TangentState& s, const Vec& dv, double h) {
    return richardson_second(
        [&](double e) {
            TangentState t = s;
            t.v += e * dv;
            return f(t);
        },
        h);
}

double spray_derivative(const AtlasManifold& m, const BundleFunction& f, const TangentState& s, double h) {
    const Christoffel gamma = christoffel_at(m, s.point());
    return directional(f, s, s.v, -gamma.contract(s.v, s.v), h);
}

const PotentialSpec& model_potential(const ModelParams& model) {
    if (const auto* lp = std::get_if<LangevinParams>(&model)) return lp->potential;
    return std::get<FldParams>(model).potential;
}

Vec psi_gradient(const AtlasManifold& m, const ModelParams& model, const ChartPoint& p) {
    const PotentialSpec& pot = model_potential(model);
    if (pot.constant) return Vec::Zero(p.coords.size());
    return potential_gradient(m, pot, p);
}

// Tangential part of w with respect to the unit direction of v.
Vec tangential_part(const Mat& g, const Vec& v, const Vec& w) {
    const Vec u = v / norm_g(g, v);
    return w - w.dot(g * u) * u;
}

double sample_mean(const std::vector<double>& xs) {
    const kernels::Moments mom = kernels::centered_moments(xs, 0.0);
    return mom.sum / static_cast<double>(xs.size());
}

// Mean and standard error of the mean of batch means over contiguous blocks.
std::pair<double, double> batch_mean_stderr(const std::vector<double>& a, const std::vector<double>& b, int batches) {
    const std::size_t n = a.size();
    const std::size_t size = n / static_cast<std::size_t>(batches);
    const kernels::Moments all = kernels::product_moments(a, b);
    const double mean = all.sum / static_cast<double>(n);
    std::vector<double> means(static_cast<std::size_t>(batches));
    for (int k = 0; k < batches; ++k) {
        const std::size_t lo = static_cast<std::size_t>(k) * size;
        const std::size_t hi = k + 1 == batches ? n : lo + size;
        const kernels::Moments mom = kernels::product_moments(std::span(a).subspan(lo, hi - lo),
                                                              std::span(b).subspan(lo, hi - lo));
        means[static_cast<std::size_t>(k)] = mom.sum / static_cast<double>(hi - lo);
    }
    const kernels::Moments dev = kernels::centered_moments(means, mean);
    const double var = dev.sum_sq / static_cast<double>(batches - 1);
    return {mean, std::sqrt(var / batches)};
}

double expectation(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                   const std::vector<TangentState>& samples) {
    if (m.compact()) return integrate_mu(m, spec, f).value;
    std::vector<double> vals;
    vals.reserve(samples.size());
    for (const auto& s : samples) vals.push_back(f(s));
    return sample_mean(vals);
}

// Separate stream for initial-law samples; trajectory streams use indices < n_traj.
RandomStream initial_stream(std::uint64_t seed) { return RandomStream(seed, std::numeric_limits<std::uint64_t>::max()); }

std::vector<std::size_t> step_indices(const std::vector<double>& times, double dt) {
    std::vector<std::size_t> out;
    for (double t : times) {
        const double r = std::round(t / dt);
        if (std::abs(r * dt - t) > 1e-9 * std::max(1.0, t)) {
            throw InvalidParameter("time " + std::to_string(t) + " is not a multiple of dt");
        }
        out.push_back(static_cast<std::size_t>(r));
    }
    return out;
}

void require_increasing(const std::vector<double>& ts, bool allow_zero) {
    if (ts.empty()) throw InvalidParameter("time grid is empty");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (!(ts[i] > 0.0 || (allow_zero && ts[i] == 0.0))) throw InvalidParameter("times must be positive");
        if (i > 0 && !(ts[i] > ts[i - 1])) throw InvalidParameter("times must be strictly increasing");
    }
}

} // namespace

Vec field_differential(const ScalarField& f, const ChartPoint& p, double step) {
    const int d = static_cast<int>(p.coords.size());
    Vec out(d);
    for (int i = 0; i < d; ++i) {
        out[i] = richardson_first(
            [&](double e) {
                ChartPoint q = p;
                q.coords[i] += e;
                return f(q);
            },
            step);
    }
    return out;
}

Mat field_coordinate_hessian(const ScalarField& f, const ChartPoint& p, double step) {
    const int d = static_cast<int>(p.coords.size());
    Mat out(d, d);
    for (int i = 0; i < d; ++i) {
        out(i, i) = richardson_second(
            [&](double e) {
                ChartPoint q = p;
                q.coords[i] += e;
                return f(q);
            },
            step);
        for (int j = i + 1; j < d; ++j) {
            auto mixed = [&](double e) {
                auto at = [&](double si, double sj) {
                    ChartPoint q = p;
                    q.coords[i] += si;
                    q.coords[j] += sj;
                    return f(q);
                };
                return (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e);
            };
            const double v = (4.0 * mixed(step) - mixed(2.0 * step)) / 3.0;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

double laplace_beltrami_fd(const AtlasManifold& m, const ScalarField& f, const ChartPoint& p) {
    const int d = static_cast<int>(p.coords.size());
    const Mat ginv = metric_at(m, p).inverse();
    const Christoffel gamma = christoffel_at(m, p);
    const Vec df = field_differential(f, p);
    const Mat hess = field_coordinate_hessian(f, p);
    double out = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double cov = hess(i, j);
            for (int k = 0; k < d; ++k) cov -= gamma(k, i, j) * df[k];
            out += ginv(i, j) * cov;
        }
    }
    return out;
}

double weighted_laplacian_fd(const AtlasManifold& m, const PotentialSpec& phi, const ScalarField& f,
                             const ChartPoint& p) {
    const double lap = laplace_beltrami_fd(m, f, p);
    if (phi.constant) return lap;
    // g(grad Phi, grad f) = dPhi . g^{-1} df
    const Mat g = metric_at(m, p);
    return lap - potential_differential(m, phi, p).dot(g.ldlt().solve(field_differential(f, p)));
}

double apply_generator_fd(const AtlasManifold& m, const ModelParams& model, const BundleFunction& f,
                          const TangentState& s, double step) {
    const ChartPoint p = s.point();
    const double transport = spray_derivative(m, f, s, step);
    const Vec grad_psi = psi_gradient(m, model, p);
    if (const auto* lp = std::get_if<LangevinParams>(&model)) {
        const double drift = fibre_directional(f, s, grad_psi, step);
        double lap_v = 0.0;
        if (lp->alpha != 0.0) {
            const Mat L = orthonormal_frame_at(m, p);
            for (int a = 0; a < L.cols(); ++a) lap_v += fibre_second(f, s, L.col(a), step);
        }
        const double friction = lp->alpha != 0.0 ? fibre_directional(f, s, s.v, step) : 0.0;
        return transport - drift + (lp->alpha / lp->beta) * lap_v - lp->alpha * friction;
    }
    const auto& fp = std::get<FldParams>(model);
    require_unit(m, s);
    const Mat g = metric_at(m, p);
    const double drift = fibre_directional(f, s, tangential_part(g, s.v, grad_psi), step);
    double lap_s = 0.0;
    if (fp.sigma != 0.0) {
        lap_s = spherical_laplacian_fd(m, s, [&](const Vec& w) { return f(TangentState{s.chart_id, s.x, w}); });
    }
    return transport - drift + 0.5 * fp.sigma * fp.sigma * lap_s;
}

double apply_antisymmetric_fd(const AtlasManifold& m, const ModelParams& model, const BundleFunction& f,
                              const TangentState& s, double step) {
    const ChartPoint p = s.point();
    const double transport = spray_derivative(m, f, s, step);
    const Vec grad_psi = psi_gradient(m, model, p);
    if (std::holds_alternative<LangevinParams>(model)) {
        return -transport + fibre_directional(f, s, grad_psi, step);
    }
    const int d = static_cast<int>(s.x.size());
    if (d < 2) throw InvalidParameter("fld antisymmetric part needs dimension >= 2");
    const Mat g = metric_at(m, p);
    return -transport + fibre_directional(f, s, tangential_part(g, s.v, grad_psi), step) / (d - 1);
}

BundleFunction product_test_function(ScalarField f0, FibreFunction g0) {
    return [f0 = std::move(f0), g0 = std::move(g0)](const TangentState& s) { return f0(s.point()) * g0(s.v); };
}

double check_pap_zero(const AtlasManifold& m, const BundleMeasureSpec& spec, const BundleFunction& f,
                      const ChartPoint& p, const QuadratureSpec& quad) {
    const ScalarField F = [&](const ChartPoint& q) { return fibrewise_average(m, spec, f, q, quad); };
    const Vec dF = field_differential(F, p);
    // g(v, grad F) = v . dF
    double acc = 0.0;
    for (const auto& node : fibre_rule_at(m, spec, p, quad)) acc += node.weight * -node.v.dot(dF);
    return std::abs(acc);
}

double pa2p_prefactor(const ModelParams& model, int dim) {
    if (const auto* lp = std::get_if<LangevinParams>(&model)) return 1.0 / lp->beta;
    return 1.0 / dim;
}

Pa2pReport check_pa2p(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                      const ScalarField& f0, const ChartPoint& p, const QuadratureSpec& quad) {
    const BundleFunction lifted = [&](const TangentState& s) { return f0(s.point()); };
    const BundleFunction a_lifted = [&](const TangentState& s) { return apply_antisymmetric_fd(m, model, lifted, s); };
    Pa2pReport r;
    for (const auto& node : fibre_rule_at(m, spec, p, quad)) {
        const TangentState s{p.chart_id, p.coords, node.v};
        r.lhs += node.weight * apply_antisymmetric_fd(m, model, a_lifted, s);
    }
    r.rhs = pa2p_prefactor(model, static_cast<int>(p.coords.size())) *
            weighted_laplacian_fd(m, spec.base_potential, f0, p);
    r.rel_error = std::abs(r.lhs - r.rhs) / std::max(std::abs(r.rhs), 1e-8);
    return r;
}

IbpReport check_ibp(const AtlasManifold& m, const BundleMeasureSpec& spec, const ScalarField& f0,
                    const ScalarField& g0, int grid_n) {
    if (!m.compact()) throw NonCompactBase(m.name + ": integration by parts check needs a compact base");
    const auto rule = base_rule(m, spec, grid_n);
    std::vector<double> lap(rule.size()), grad(rule.size()), ws(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const ChartPoint& p = rule[i].first;
        const Mat g = metric_at(m, p);
        lap[i] = weighted_laplacian_fd(m, spec.base_potential, f0, p) * g0(p);
        grad[i] = field_differential(f0, p).dot(g.ldlt().solve(field_differential(g0, p)));
        ws[i] = rule[i].second;
    }
    IbpReport r;
    r.laplacian_term = kernels::dot(lap, ws);
    r.gradient_term = kernels::dot(grad, ws);
    r.residual = std::abs(r.laplacian_term + r.gradient_term);
    return r;
}

double microscopic_constant(const ModelParams& model, int dim) {
    if (const auto* lp = std::get_if<LangevinParams>(&model)) {
        if (!(lp->alpha > 0.0)) throw InvalidParameter("microscopic constant needs alpha > 0");
        return lp->alpha;
    }
    const double sigma = std::get<FldParams>(model).sigma;
    if (!(sigma > 0.0) || dim < 2) throw InvalidParameter("microscopic constant needs sigma > 0 and d >= 2");
    return (dim - 1) * sigma * sigma / 2.0;
}

double macroscopic_constant(double lambda, const ModelParams& model, int dim) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidParameter("macroscopic constant needs Lambda > 0");
    if (const auto* lp = std::get_if<LangevinParams>(&model)) return lambda / lp->beta;
    if (dim < 1) throw InvalidParameter("macroscopic constant needs d >= 1");
    return lambda / dim;
}

double c1_constant(const ModelParams& model, int dim) {
    if (const auto* lp = std::get_if<LangevinParams>(&model)) {
        if (!(lp->alpha > 0.0)) throw InvalidParameter("c1 needs alpha > 0");
        return lp->alpha / 2.0;
    }
    const double sigma = std::get<FldParams>(model).sigma;
    if (!(sigma > 0.0) || dim < 2) throw InvalidParameter("c1 needs sigma > 0 and d >= 2");
    return (dim - 1) * sigma * sigma / 4.0;
}

FvGrid build_fv_grid(const AtlasManifold& m, const PotentialSpec& phi, int grid_n) {
    if (!m.patch) throw NonCompactBase(m.name + ": no compact patch; supply the Poincare constant");
    if (grid_n < 4) throw InvalidParameter("grid_n must be >= 4");
    const CompactPatch& patch = *m.patch;
    const double len_a = patch.hi[0] - patch.lo[0];
    const double len_b = patch.hi[1] - patch.lo[1];
    FvGrid grid;
    grid.n_a = grid_n;
    grid.n_b = std::max(4, static_cast<int>(std::lround(grid_n * len_b / len_a)));
    const double da = len_a / grid.n_a;
    const double db = len_b / grid.n_b;
    auto index = [&](int i, int j) { return i * grid.n_b + j; };
    // Density of e^{-Phi} vol_g in patch parameters.
    auto rho = [&](double a, double b) {
        const auto g = patch.diag_metric(a, b);
        return std::exp(-phi(patch.to_chart(a, b))) * std::sqrt(g[0] * g[1]);
    };
    const int n = grid.n_a * grid.n_b;
    grid.centers.resize(static_cast<std::size_t>(n));
    grid.mass.resize(static_cast<std::size_t>(n));
    std::vector<Eigen::Triplet<double>> trips;
    auto couple = [&](int p, int q, double c) {
        trips.emplace_back(p, p, c);
        trips.emplace_back(q, q, c);
        trips.emplace_back(p, q, -c);
        trips.emplace_back(q, p, -c);
    };
    for (int i = 0; i < grid.n_a; ++i) {
        const double a = patch.lo[0] + (i + 0.5) * da;
        for (int j = 0; j < grid.n_b; ++j) {
            const double b = patch.lo[1] + (j + 0.5) * db;
            grid.centers[static_cast<std::size_t>(index(i, j))] = patch.to_chart(a, b);
            grid.mass[static_cast<std::size_t>(index(i, j))] = rho(a, b) * da * db;
            // Face towards i + 1.
            if (i + 1 < grid.n_a || patch.periodic[0]) {
                const double af = patch.lo[0] + (i + 1) * da;
                const double c = rho(af, b) / patch.diag_metric(af, b)[0] * db / da;
                couple(index(i, j), index((i + 1) % grid.n_a, j), c);
            }
            // Face towards j + 1.
            if (j + 1 < grid.n_b || patch.periodic[1]) {
                const double bf = patch.lo[1] + (j + 1) * db;
                const double c = rho(a, bf) / patch.diag_metric(a, bf)[1] * da / db;
                couple(index(i, j), index(i, (j + 1) % grid.n_b), c);
            }
        }
    }
    grid.stiffness.resize(n, n);
    grid.stiffness.setFromTriplets(trips.begin(), trips.end());
    return grid;
}

double estimate_poincare(const AtlasManifold& m, const PotentialSpec& phi, int grid_n) {
    const FvGrid grid = build_fv_grid(m, phi, grid_n);
    const int n = static_cast<int>(grid.mass.size());
    const Eigen::Map<const Eigen::VectorXd> mass(grid.mass.data(), n);
    // Shift-invert block iteration for the lowest part of K x = lambda M x.
    constexpr double tau = 1.0;
    constexpr int block = 8;
    Eigen::SparseMatrix<double> shifted = grid.stiffness;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += tau * mass[i];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    if (solver.info() != Eigen::Success) throw SingularMetric("Poincare estimate: factorization failed");

    RandomStream rng(0x9e3779b9ULL, 0);
    Eigen::MatrixXd X(n, block);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < block; ++k) X(i, k) = rng.gaussian();
    }
    Eigen::VectorXd evals = Eigen::VectorXd::Zero(block);
    double previous = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 2000; ++iter) {
        const Eigen::MatrixXd Y = solver.solve(mass.asDiagonal() * X);
        const Eigen::MatrixXd Kr = Y.transpose() * (grid.stiffness * Y);
        const Eigen::MatrixXd Mr = Y.transpose() * mass.asDiagonal() * Y;
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> rr(0.5 * (Kr + Kr.transpose()),
                                                                     0.5 * (Mr + Mr.transpose()));
        X = Y * rr.eigenvectors();
        evals = rr.eigenvalues();
        if (std::abs(evals[1] - previous) <= 1e-13 * std::abs(evals[1])) break;
        previous = evals[1];
    }
    // evals[0] belongs to the constants.
    return evals[1];
}

double dms_epsilon_max(const DmsConstants& k) {
    const double delta = k.lambda_M / (1.0 + k.lambda_M);
    const double c = k.c1 + k.c2;
    return std::min(1.0, k.lambda_m * delta / (delta + 0.25 * c * c));
}

double dms_kappa2(const DmsConstants& k, double eps) {
    const double delta = k.lambda_M / (1.0 + k.lambda_M);
    const double c = k.c1 + k.c2;
    const double a = k.lambda_m - eps;
    const double d = eps * delta;
    const double b = -0.5 * eps * c;
    const double lambda_min = 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + b * b);
    return lambda_min / (1.0 + eps);
}

RateBundle dms_rate(const DmsConstants& k) {
    for (double c : {k.lambda_m, k.lambda_M, k.c1, k.c2}) {
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw InfeasibleConstants("DMS constants must be finite and strictly positive");
        }
    }
    const double hi = dms_epsilon_max(k);
    if (!(hi > 0.0)) throw InfeasibleConstants("no mixing weight makes the DMS form positive definite");
    // Coarse scan to bracket the maximum, then golden-section refinement.
    constexpr int scan = 256;
    int best = 1;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < scan; ++i) {
        const double v = dms_kappa2(k, hi * i / scan);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = hi * (best - 1) / scan;
    double b = hi * (best + 1) / scan;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = dms_kappa2(k, x1);
    double f2 = dms_kappa2(k, x2);
    for (int it = 0; it < 200 && (b - a) > 1e-15 * hi; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = dms_kappa2(k, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = dms_kappa2(k, x1);
        }
    }
    RateBundle r;
    r.epsilon = 0.5 * (a + b);
    r.kappa2 = dms_kappa2(k, r.epsilon);
    if (!(r.kappa2 > 0.0) || !(r.epsilon < 1.0)) throw InfeasibleConstants("DMS optimization found no positive rate");
    r.kappa1 = std::sqrt((1.0 + r.epsilon) / (1.0 - r.epsilon));
    return r;
}

double estimate_c2(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                   const std::vector<BundleFunction>& family, int grid_n, int hermite_order) {
    if (family.empty()) throw InvalidParameter("estimate_c2: empty test family");
    const FvGrid grid = build_fv_grid(m, spec.base_potential, grid_n);
    const int n = static_cast<int>(grid.mass.size());
    const Eigen::Map<const Eigen::VectorXd> mass(grid.mass.data(), n);
    const double total_mass = mass.sum();
    const double c = pa2p_prefactor(model, m.dimension);

    QuadratureSpec quad;
    quad.hermite_order = hermite_order;
    quad.circle_n = 32;
    quad.sphere_n_theta = 16;
    quad.sphere_n_phi = 16;

    Eigen::SparseMatrix<double> op = c * grid.stiffness;
    for (int i = 0; i < n; ++i) op.coeffRef(i, i) += mass[i];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(op);
    if (solver.info() != Eigen::Success) throw SingularMetric("estimate_c2: factorization failed");

    double best = 0.0;
    for (const auto& f : family) {
        const BundleFunction af = [&](const TangentState& s) { return apply_antisymmetric_fd(m, model, f, s); };
        const ScalarField F = [&](const ChartPoint& q) { return fibrewise_average(m, spec, f, q, quad); };
        Eigen::VectorXd r(n);
        double micro = 0.0;
        for (int i = 0; i < n; ++i) {
            const ChartPoint& p = grid.centers[static_cast<std::size_t>(i)];
            const double Fp = F(p);
            double pa2f = 0.0;
            double var = 0.0;
            for (const auto& node : fibre_rule_at(m, spec, p, quad)) {
                const TangentState s{p.chart_id, p.coords, node.v};
                pa2f += node.weight * apply_antisymmetric_fd(m, model, af, s);
                const double dev = f(s) - Fp;
                var += node.weight * dev * dev;
            }
            // P A^2 (I - P) f = P A^2 f - c Delta_w P f
            r[i] = pa2f - c * weighted_laplacian_fd(m, spec.base_potential, F, p);
            micro += mass[i] * var;
        }
        micro /= total_mass;
        if (micro < 1e-20) continue;
        const Eigen::VectorXd u = solver.solve(-(mass.asDiagonal() * r).eval());
        const double macro = u.dot(mass.asDiagonal() * u) / total_mass;
        best = std::max(best, std::sqrt(macro / micro));
    }
    return best;
}

DecayCurve semigroup_decay(const AtlasManifold& m, const BundleMeasureSpec& spec, const ModelParams& model,
                           const BundleFunction& g, const std::vector<double>& ts, std::size_t n_traj,
                           const IntegratorConfig& cfg, int batches) {
    cfg.validate();
    require_increasing(ts, true);
    if (n_traj < 1000) throw InvalidParameter("semigroup_decay needs n_traj >= 1000");
    if (batches < 2) throw InvalidParameter("semigroup_decay needs at least 2 batches");
    DecayCurve curve;
    curve.times = ts;
    if (curve.times.front() != 0.0) curve.times.insert(curve.times.begin(), 0.0);
    curve.n_traj = n_traj;
    const auto steps = step_indices(curve.times, cfg.dt);

    RandomStream init_rng = initial_stream(cfg.seed);
    const std::vector<TangentState> inits = sample_mu(m, spec, n_traj, init_rng);
    curve.mean = expectation(m, spec, g, inits);

    std::vector<int> slot(steps.back() + 1, -1);
    for (std::size_t k = 0; k < steps.size(); ++k) slot[steps[k]] = static_cast<int>(k);
    std::vector<std::vector<double>> centred(curve.times.size(), std::vector<double>(n_traj));

    IntegratorConfig run = cfg;
    run.t_final = static_cast<double>(steps.back()) * cfg.dt;
    run.record_stride = 1;
    if (steps.back() == 0) {
        for (std::size_t i = 0; i < n_traj; ++i) centred[0][i] = g(inits[i]) - curve.mean;
    } else {
        run_ensemble(m, inits, model, run, [&](std::size_t i, std::size_t r, double, const TangentState& s) {
            const int k = slot[r];
            if (k >= 0) centred[static_cast<std::size_t>(k)][i] = g(s) - curve.mean;
        });
    }
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        const auto [mean, se] = batch_mean_stderr(centred[0], centred[k], batches);
        curve.values.push_back(mean);
        curve.stderr_.push_back(se);
    }
    return curve;
}

RateFit fit_exponential_rate(const DecayCurve& curve) {
    std::vector<double> t, y, w;
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        const double v = std::abs(curve.values[k]);
        const double se = curve.stderr_[k];
        if (!(se > 0.0) || !(v > 3.0 * se)) continue;
        t.push_back(curve.times[k]);
        y.push_back(std::log(v));
        w.push_back((v / se) * (v / se));
    }
    if (t.size() < 4) {
        throw InsufficientSignal("exponential fit needs >= 4 points above 3 stderr, got " + std::to_string(t.size()));
    }
    double sw = 0, st = 0, sy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sw += w[i];
        st += w[i] * t[i];
        sy += w[i] * y[i];
    }
    const double tbar = st / sw;
    const double ybar = sy / sw;
    double stt = 0, sty = 0, syy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += w[i] * (t[i] - tbar) * (t[i] - tbar);
        sty += w[i] * (t[i] - tbar) * (y[i] - ybar);
        syy += w[i] * (y[i] - ybar) * (y[i] - ybar);
    }
    RateFit fit;
    fit.fit_window = t;
    const double slope = sty / stt;
    fit.kappa2_hat = -slope;
    fit.log_prefactor = ybar - slope * tbar;
    fit.slope_stderr = std::sqrt(1.0 / stt);
    fit.r_squared = syy > 0.0 ? (sty * sty) / (stt * syy) : 0.0;
    if (!(fit.kappa2_hat > std::max(2.0 * fit.slope_stderr, 1e-12))) {
        throw InsufficientSignal("no significant decay: fitted rate " + std::to_string(fit.kappa2_hat) +
                                 " with stderr " + std::to_string(fit.slope_stderr));
    }
    return fit;
}

double time_average_bound(double t, const RateBundle& rates, double f_norm) {
    return 2.0 / std::sqrt(t) * std::sqrt(2.0 * rates.kappa1 / rates.kappa2 * -std::expm1(-t * rates.kappa2)) * f_norm;
}

TimeAverageReport time_average_check(const AtlasManifold& m, const BundleMeasureSpec& spec,
                                     const ModelParams& model, const BundleFunction& f,
                                     const std::vector<double>& t_grid, std::size_t n_traj,
                                     const RateBundle& rates, const IntegratorConfig& cfg) {
    cfg.validate();
    require_increasing(t_grid, false);
    if (n_traj < 2) throw InvalidParameter("time_average_check needs n_traj >= 2");
    const auto steps = step_indices(t_grid, cfg.dt);

    RandomStream init_rng = initial_stream(cfg.seed);
    const std::vector<TangentState> inits = sample_mu(m, spec, n_traj, init_rng);
    const double mean = expectation(m, spec, f, inits);
    TimeAverageReport report;
    if (m.compact()) {
        const BundleFunction sq = [&](const TangentState& s) {
            const double d = f(s) - mean;
            return d * d;
        };
        report.f_norm = std::sqrt(std::max(0.0, integrate_mu(m, spec, sq).value));
    } else {
        std::vector<double> dev;
        for (const auto& s : inits) dev.push_back(f(s) - mean);
        report.f_norm = std::sqrt(kernels::centered_moments(dev, 0.0).sum_sq / static_cast<double>(dev.size()));
    }

    std::vector<int> slot(steps.back() + 1, -1);
    for (std::size_t k = 0; k < steps.size(); ++k) slot[steps[k]] = static_cast<int>(k);
    std::vector<double> integral(n_traj, 0.0), previous(n_traj, 0.0);
    std::vector<std::vector<double>> err(t_grid.size(), std::vector<double>(n_traj));

    IntegratorConfig run = cfg;
    run.t_final = static_cast<double>(steps.back()) * cfg.dt;
    run.record_stride = 1;
    run_ensemble(m, inits, model, run, [&](std::size_t i, std::size_t r, double t, const TangentState& s) {
        const double v = f(s);
        if (r > 0) integral[i] += 0.5 * cfg.dt * (previous[i] + v);
        previous[i] = v;
        const int k = slot[r];
        if (k >= 0) err[static_cast<std::size_t>(k)][i] = integral[i] / t - mean;
    });

    const double n = static_cast<double>(n_traj);
    std::vector<double> log_t, log_lhs;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        TimeAverageRow row;
        row.t = t_grid[k];
        std::vector<double> sq(n_traj);
        for (std::size_t i = 0; i < n_traj; ++i) sq[i] = err[k][i] * err[k][i];
        const kernels::Moments mom = kernels::centered_moments(sq, 0.0);
        const double msq = mom.sum / n;
        const double var = std::max(0.0, (mom.sum_sq - n * msq * msq) / (n - 1.0));
        row.lhs = std::sqrt(msq);
        row.lhs_stderr = row.lhs > 0.0 ? std::sqrt(var / n) / (2.0 * row.lhs) : 0.0;
        row.rhs = time_average_bound(row.t, rates, report.f_norm);
        row.violated = row.lhs - 2.0 * row.lhs_stderr > row.rhs;
        report.all_within_bound = report.all_within_bound && !row.violated;
        if (row.lhs > 0.0) {
            log_t.push_back(std::log(row.t));
            log_lhs.push_back(std::log(row.lhs));
        }
        report.rows.push_back(row);
    }
    report.loglog_slope = std::numeric_limits<double>::quiet_NaN();
    if (log_t.size() >= 2) {
        const double tb = sample_mean(log_t);
        const double yb = sample_mean(log_lhs);
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < log_t.size(); ++i) {
            sxy += (log_t[i] - tb) * (log_lhs[i] - yb);
            sxx += (log_t[i] - tb) * (log_t[i] - tb);
        }
        report.loglog_slope = sxy / sxx;
    }
    return report;
}

P3Report check_p3(const PotentialSpec& phi, const AtlasManifold& m, const std::vector<ChartPoint>& points) {
    if (points.empty()) throw InvalidParameter("check_p3: no sample points");
    P3Report r;
    r.worst_point = points.front();
    r.c_hat = -1.0;
    for (const auto& p : points) {
        const int d = static_cast<int>(p.coords.size());
        const Mat g = metric_at(m, p);
        const Mat ginv = g.inverse();
        const Christoffel gamma = christoffel_at(m, p);
        const Vec dphi = potential_differential(m, phi, p);
        Mat hess = potential_coordinate_hessian(m, phi, p);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                for (int k = 0; k < d; ++k) hess(i, j) -= gamma(k, i, j) * dphi[k];
            }
        }
        const Mat raised = ginv * hess;
        const double hess_norm = std::sqrt(std::max(0.0, (raised * raised).trace()));
        const double grad_norm = std::sqrt(std::max(0.0, dphi.dot(ginv * dphi)));
        const double ratio = hess_norm / (1.0 + grad_norm);
        if (ratio > r.c_hat) {
            r.c_hat = ratio;
            r.worst_point = p;
        }
    }
    return r;
}

double check_fld_potential_condition_euclidean(const PotentialSpec& psi, const std::vector<Vec>& points,
                                               const FibreFunction& g0, int fibre_n) {
    if (points.empty()) throw InvalidParameter("no test points");
    const int d = static_cast<int>(points.front().size());
    if (d < 2 || d > 3) throw InvalidParameter("fld potential condition check supports d = 2 or 3");
    const AtlasManifold m = euclidean(d);
    BundleMeasureSpec spec;
    spec.fibre = FibreKind::uniform_sphere;
    QuadratureSpec quad;
    quad.circle_n = fibre_n;
    quad.sphere_n_theta = std::max(4, fibre_n / 4);
    quad.sphere_n_phi = std::max(4, fibre_n / 8);
    double worst = 0.0;
    for (const auto& x : points) {
        const ChartPoint p{0, x};
        const double value = psi(p);
        if (!(value > 0.0)) throw InvalidParameter("fld potential condition needs Psi > 0");
        const Vec grad = potential_gradient(m, psi, p);
        const double gnorm = grad.norm();
        if (!(gnorm > 1e-12)) throw DegenerateGradient("grad Psi vanishes at a test point");
        const Vec z = grad / (value * gnorm);
        const Vec dir = grad / gnorm;
        double lhs = 0.0;
        double rhs = 0.0;
        for (const auto& node : fibre_rule_at(m, spec, p, quad)) {
            const TangentState s{0, x, node.v};
            const Vec grad_u = z - z.dot(node.v) * node.v;
            const Vec grad_h = value * spherical_gradient_fd(m, s, g0);
            lhs += node.weight * grad_u.dot(grad_h);
            rhs += node.weight * (d - 1) * node.v.dot(dir) * g0(node.v);
        }
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

} // namespace geolangevin
