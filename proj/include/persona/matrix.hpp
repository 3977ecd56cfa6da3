#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "persona/errors.hpp"

namespace persona {

/// Dense row-major matrix of doubles. The single value type every other
/// module trades in; a row vector is a 1xN matrix.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) {
            throw shape_error("Matrix: zero dimension (" + std::to_string(rows) + "x" +
                              std::to_string(cols) + ")");
        }
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0) throw shape_error("Matrix: zero dimension");
        if (rows * cols != data_.size()) {
            throw shape_error("Matrix: data length " + std::to_string(data_.size()) +
                              " does not match " + std::to_string(rows) + "x" +
                              std::to_string(cols));
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Matrix reshaped(std::size_t r, std::size_t c) const {
        if (r * c != data_.size()) throw shape_error("reshape: element count mismatch");
        Matrix out;
        out.rows_ = r;
        out.cols_ = c;
        out.data_ = data_;
        return out;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw shape_error("matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw shape_error("add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += b.at(i);
    return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw shape_error("sub: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= b.at(i);
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw shape_error("hadamard: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= b.at(i);
    return out;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= s;
    return out;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i) * a.at(i);
    return std::sqrt(s);
}

/// Hard clamp of every entry into [-bound, bound].
inline Matrix clamp_entries(const Matrix& x, double bound) {
    if (!(bound > 0.0)) throw invalid_input_error("clamp: bound must be positive");
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.at(i) > bound) out.at(i) = bound;
        else if (out.at(i) < -bound) out.at(i) = -bound;
    }
    return out;
}

/// Uniform Glorot initialization in +-sqrt(6/(rows+cols)). Deterministic per seed.
inline Matrix xavier_init(std::size_t rows, std::size_t cols, std::uint64_t rng_seed) {
    if (rows == 0 || cols == 0) throw shape_error("xavier_init: zero dimension");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = dist(rng);
    return out;
}

inline Matrix xavier_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    if (rows == 0 || cols == 0) throw shape_error("xavier_init: zero dimension");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = dist(rng);
    return out;
}

}  // namespace persona
