#pragma once
// Dense row-major matrix and the handful of vector kernels the model needs.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace ikrl {

using Vec = std::vector<double>;

enum class Norm { L1, L2 };

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> v, Norm kind) {
    double s = 0.0;
    if (kind == Norm::L1) {
        for (double x : v) s += std::abs(x);
        return s;
    }
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double l2(std::span<const double> v) { return norm(v, Norm::L2); }

// h + r - t
inline Vec translation_residual(std::span<const double> h, std::span<const double> r,
                                std::span<const double> t) {
    assert(h.size() == r.size() && r.size() == t.size());
    Vec out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] + r[i] - t[i];
    return out;
}

// d||v|| / dv. L1 uses sign with sign(0) = 0; L2 is v/||v||, zero at the origin.
inline Vec norm_gradient(std::span<const double> v, Norm kind) {
    Vec g(v.size(), 0.0);
    if (kind == Norm::L1) {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] = (v[i] > 0.0) - (v[i] < 0.0);
        return g;
    }
    const double n = l2(v);
    if (n == 0.0) return g;
    for (std::size_t i = 0; i < v.size(); ++i) g[i] = v[i] / n;
    return g;
}

// y = A x
inline Vec matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size())
        throw std::invalid_argument("matvec: matrix has " + std::to_string(a.cols()) +
                                    " columns, vector has " + std::to_string(x.size()));
    Vec y(a.rows(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
    return y;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Rescale v to unit L2 norm when it exceeds 1.
inline void clamp_unit_norm(std::span<double> v) {
    const double n = l2(v);
    if (n > 1.0)
        for (double& x : v) x /= n;
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace ikrl
