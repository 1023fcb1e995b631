#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Dense>

namespace geolangevin {

/// Largest manifold dimension supported by the fixed-capacity vector types.
inline constexpr int kMaxDim = 4;

/// Coordinate vector of runtime length d <= kMaxDim; never heap-allocates.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
/// d x d matrix with the same fixed capacity.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Christoffel symbols of the second kind, Gamma^k_{ij}, stored densely.
class Christoffel {
public:
    Christoffel() = default;
    explicit Christoffel(int dim) : dim_(dim) { data_.fill(0.0); }

    int dim() const { return dim_; }

    double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }
    double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }

    /// Gamma^k_{ij} a^i b^j.
    Vec contract(const Vec& a, const Vec& b) const {
        Vec out = Vec::Zero(dim_);
        for (int k = 0; k < dim_; ++k) {
            double acc = 0.0;
            for (int i = 0; i < dim_; ++i) {
                for (int j = 0; j < dim_; ++j) {
                    acc += (*this)(k, i, j) * a[i] * b[j];
                }
            }
            out[k] = acc;
        }
        return out;
    }

    /// N^k_i = Gamma^k_{ij} v^j.
    Mat contract_last(const Vec& v) const {
        Mat out = Mat::Zero(dim_, dim_);
        for (int k = 0; k < dim_; ++k) {
            for (int i = 0; i < dim_; ++i) {
                double acc = 0.0;
                for (int j = 0; j < dim_; ++j) acc += (*this)(k, i, j) * v[j];
                out(k, i) = acc;
            }
        }
        return out;
    }

private:
    static std::size_t index(int k, int i, int j) {
        return static_cast<std::size_t>((k * kMaxDim + i) * kMaxDim + j);
    }

    int dim_ = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim> data_{};
};

} // namespace geolangevin
