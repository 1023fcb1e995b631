#include "geolangevin/kernels.hpp"

#include <cassert>

namespace geolangevin::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Moments product_moments(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    Moments m;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double p = a[i] * b[i];
        m.sum += p;
        m.sum_sq += p * p;
    }
    return m;
}

Moments centered_moments(std::span<const double> a, double shift) {
    Moments m;
    for (const double x : a) {
        const double c = x - shift;
        m.sum += c;
        m.sum_sq += c * c;
    }
    return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

} // namespace geolangevin::kernels::scalar
