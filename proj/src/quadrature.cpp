#include "geolangevin/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "geolangevin/errors.hpp"

namespace geolangevin {

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// mu0 times the squared first eigenvector components.
GaussRule golub_welsch(int order, const Eigen::VectorXd& off_diagonal, double mu0) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int i = 0; i + 1 < order; ++i) {
        J(i, i + 1) = off_diagonal[i];
        J(i + 1, i) = off_diagonal[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        rule.nodes[i] = es.eigenvalues()[i];
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = mu0 * v0 * v0;
    }
    // Exact symmetry about 0 for both rules.
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    return rule;
}

} // namespace

GaussRule gauss_hermite(int order) {
    if (order < 1) throw InvalidParameter("gauss_hermite: order must be >= 1");
    Eigen::VectorXd b(std::max(order - 1, 0));
    for (int i = 0; i + 1 < order; ++i) b[i] = std::sqrt(0.5 * (i + 1));
    return golub_welsch(order, b, std::sqrt(std::numbers::pi));
}

GaussRule gauss_legendre(int order) {
    if (order < 1) throw InvalidParameter("gauss_legendre: order must be >= 1");
    Eigen::VectorXd b(std::max(order - 1, 0));
    for (int i = 0; i + 1 < order; ++i) {
        const double k = i + 1;
        b[i] = k / std::sqrt(4.0 * k * k - 1.0);
    }
    return golub_welsch(order, b, 2.0);
}

} // namespace geolangevin
