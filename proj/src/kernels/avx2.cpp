#include "geolangevin/kernels.hpp"

#include <cassert>

#if defined(__x86_64__) || defined(_M_X64)
#define GEOLANGEVIN_X86 1
#include <immintrin.h>
#else
#define GEOLANGEVIN_X86 0
#endif

namespace geolangevin::kernels::avx2 {

#if GEOLANGEVIN_X86 && defined(__AVX2__) && defined(__FMA__)

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

} // namespace

bool supported() { return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"); }

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    }
    double out = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

Moments product_moments(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    __m256d s = _mm256_setzero_pd();
    __m256d sq = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
        s = _mm256_add_pd(s, p);
        sq = _mm256_fmadd_pd(p, p, sq);
    }
    Moments m{hsum(s), hsum(sq)};
    for (; i < n; ++i) {
        const double p = a[i] * b[i];
        m.sum += p;
        m.sum_sq += p * p;
    }
    return m;
}

Moments centered_moments(std::span<const double> a, double shift) {
    const std::size_t n = a.size();
    const __m256d c = _mm256_set1_pd(shift);
    __m256d s = _mm256_setzero_pd();
    __m256d sq = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), c);
        s = _mm256_add_pd(s, x);
        sq = _mm256_fmadd_pd(x, x, sq);
    }
    Moments m{hsum(s), hsum(sq)};
    for (; i < n; ++i) {
        const double x = a[i] - shift;
        m.sum += x;
        m.sum_sq += x * x;
    }
    return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    const std::size_t n = x.size();
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i));
        _mm256_storeu_pd(y.data() + i, r);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

#else

bool supported() { return false; }
double dot(std::span<const double> a, std::span<const double> b) { return scalar::dot(a, b); }
Moments product_moments(std::span<const double> a, std::span<const double> b) {
    return scalar::product_moments(a, b);
}
Moments centered_moments(std::span<const double> a, double shift) { return scalar::centered_moments(a, shift); }
void axpy(double alpha, std::span<const double> x, std::span<double> y) { scalar::axpy(alpha, x, y); }

#endif

} // namespace geolangevin::kernels::avx2
