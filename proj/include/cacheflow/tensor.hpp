#pragma once

// Dense row-major 2-D matrix of doubles. This is the only numeric
// container the autodiff tape and the models operate on; vectors are
// 1xN or Nx1 matrices.

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "cacheflow/error.hpp"

namespace cacheflow {

// Point in flow/latent space.
using LatentVector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), data(std::move(v)) {
        if (data.size() != rows * cols)
            throw DimensionError("matrix init: " + std::to_string(data.size()) + " values for " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
    }

    static Matrix row(std::initializer_list<double> v) {
        return Matrix(1, v.size(), std::vector<double>(v));
    }

    std::size_t size() const { return data.size(); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw DimensionError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace cacheflow
