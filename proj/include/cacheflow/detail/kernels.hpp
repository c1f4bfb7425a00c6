#pragma once

// Raw matrix kernels. Both the autodiff tape and the plain (untaped)
// model forwards call these, so the two paths produce bit-identical
// floating point results by construction.

#include <cmath>
#include <cstddef>

#include "../error.hpp"
#include "../tensor.hpp"

namespace cacheflow::detail {

inline void check_finite(const Matrix& m, const char* op) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value from ") + op);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw DimensionError("matmul: " + shape_str(a) + " * " + shape_str(b));
    Matrix y(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row_ptr(i);
        double* yr = y.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) yr[j] += av * br[j];
        }
    }
    return y;
}

// y += a^T * g  (gradient of matmul wrt its right operand)
inline void matmul_at_g(const Matrix& a, const Matrix& g, Matrix& y) {
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* ar = a.row_ptr(k);
        const double* gr = g.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            double av = ar[i];
            if (av == 0.0) continue;
            double* yr = y.row_ptr(i);
            for (std::size_t j = 0; j < g.cols; ++j) yr[j] += av * gr[j];
        }
    }
}

// y += g * b^T  (gradient of matmul wrt its left operand)
inline void matmul_g_bt(const Matrix& g, const Matrix& b, Matrix& y) {
    for (std::size_t i = 0; i < g.rows; ++i) {
        const double* gr = g.row_ptr(i);
        double* yr = y.row_ptr(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* br = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < g.cols; ++k) acc += gr[k] * br[k];
            yr[j] += acc;
        }
    }
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
    return y;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= b.data[i];
    return y;
}

inline Matrix mul(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "mul");
    Matrix y = a;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.data[i];
    return y;
}

inline Matrix add_rowvec(const Matrix& a, const Matrix& v) {
    if (v.rows != 1 || v.cols != a.cols)
        throw DimensionError("add_rowvec: " + shape_str(a) + " + " + shape_str(v));
    Matrix y = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* yr = y.row_ptr(i);
        for (std::size_t j = 0; j < a.cols; ++j) yr[j] += v.data[j];
    }
    return y;
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline Matrix map_tanh(const Matrix& a) {
    Matrix y = a;
    for (double& v : y.data) v = std::tanh(v);
    return y;
}

inline Matrix map_sigmoid(const Matrix& a) {
    Matrix y = a;
    for (double& v : y.data) v = sigmoid(v);
    return y;
}

inline Matrix map_silu(const Matrix& a) {
    Matrix y = a;
    for (double& v : y.data) v = v * sigmoid(v);
    return y;
}

inline Matrix map_softplus(const Matrix& a) {
    Matrix y = a;
    for (double& v : y.data) v = softplus(v);
    return y;
}

}  // namespace cacheflow::detail
