#include <cstdlib>
#include <string>

#include "geolangevin/kernels.hpp"

namespace geolangevin::kernels {

namespace {

Isa detect() {
    if (const char* env = std::getenv("GEOLANGEVIN_SIMD")) {
        if (std::string(env) == "scalar") return Isa::scalar;
    }
    return avx2::supported() ? Isa::avx2 : Isa::scalar;
}

} // namespace

Isa active_isa() {
    static const Isa isa = detect();
    return isa;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

double dot(std::span<const double> a, std::span<const double> b) {
    return active_isa() == Isa::avx2 ? avx2::dot(a, b) : scalar::dot(a, b);
}

Moments product_moments(std::span<const double> a, std::span<const double> b) {
    return active_isa() == Isa::avx2 ? avx2::product_moments(a, b) : scalar::product_moments(a, b);
}

Moments centered_moments(std::span<const double> a, double shift) {
    return active_isa() == Isa::avx2 ? avx2::centered_moments(a, shift) : scalar::centered_moments(a, shift);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (active_isa() == Isa::avx2) {
        avx2::axpy(alpha, x, y);
    } else {
        scalar::axpy(alpha, x, y);
    }
}

} // namespace geolangevin::kernels
