#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seqfreq/errors.hpp"

namespace seqfreq {

/// Dense row-major matrix of 64-bit floats.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Non-owning view of a row-major matrix living inside a flat parameter block.
struct MatrixView {
    double* ptr = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double& operator()(std::size_t i, std::size_t j) const { return ptr[i * cols + j]; }
    std::span<double> row(std::size_t i) const { return {ptr + i * cols, cols}; }
};

struct ConstMatrixView {
    const double* ptr = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    ConstMatrixView() = default;
    ConstMatrixView(const double* p, std::size_t r, std::size_t c) : ptr(p), rows(r), cols(c) {}
    ConstMatrixView(const MatrixView& v) : ptr(v.ptr), rows(v.rows), cols(v.cols) {}
    ConstMatrixView(const Matrix& m) : ptr(m.data().data()), rows(m.rows()), cols(m.cols()) {}

    double operator()(std::size_t i, std::size_t j) const { return ptr[i * cols + j]; }
    std::span<const double> row(std::size_t i) const { return {ptr + i * cols, cols}; }
};

/// out += m * v
inline void matvec_acc(ConstMatrixView m, std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.ptr + i * m.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += row[j] * v[j];
        out[i] += acc;
    }
}

/// out += m^T * v
inline void matvec_t_acc(ConstMatrixView m, std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double vi = v[i];
        const double* row = m.ptr + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += vi * row[j];
    }
}

/// m += u * v^T
inline void outer_acc(MatrixView m, std::span<const double> u, std::span<const double> v) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double ui = u[i];
        double* row = m.ptr + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += ui * v[j];
    }
}

/// Standard matrix-vector product.
inline std::vector<double> matvec(ConstMatrixView m, std::span<const double> v) {
    if (v.size() != m.cols) {
        throw ConfigError("matvec: vector length " + std::to_string(v.size()) +
                          " does not match matrix cols " + std::to_string(m.cols));
    }
    std::vector<double> out(m.rows, 0.0);
    matvec_acc(m, v, out);
    return out;
}

} // namespace seqfreq
