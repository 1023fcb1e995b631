#pragma once

// Data-parallel reductions used by quadrature and Monte Carlo estimators.
// Each kernel has a scalar reference implementation and an AVX2/FMA variant;
// the public entry points dispatch once per process on CPU support.

#include <cstddef>
#include <span>
#include <string_view>

namespace geolangevin::kernels {

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
};

enum class Isa { scalar, avx2 };

/// ISA chosen by the dispatcher. GEOLANGEVIN_SIMD=scalar forces the reference path.
Isa active_isa();
std::string_view isa_name(Isa isa);

/// sum_i a_i b_i
double dot(std::span<const double> a, std::span<const double> b);

/// Sum and sum of squares of the products a_i b_i.
Moments product_moments(std::span<const double> a, std::span<const double> b);

/// Sum and sum of squares of (a_i - shift).
Moments centered_moments(std::span<const double> a, double shift);

/// y_i += alpha x_i
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
Moments product_moments(std::span<const double> a, std::span<const double> b);
Moments centered_moments(std::span<const double> a, double shift);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
} // namespace scalar

namespace avx2 {
bool supported();
double dot(std::span<const double> a, std::span<const double> b);
Moments product_moments(std::span<const double> a, std::span<const double> b);
Moments centered_moments(std::span<const double> a, double shift);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
} // namespace avx2

} // namespace geolangevin::kernels
