#include "permkron/matrix.hpp"

#include <cassert>
#include <cmath>

namespace permkron {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols == b.rows);
    DenseMatrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.data[i * a.cols + k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

DenseMatrix matmul_bt(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols == b.cols);
    DenseMatrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[j * b.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            out.data[i * out.cols + j] = s;
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.data[j * out.cols + i] = a.data[i * a.cols + j];
    return out;
}

double frobenius_norm_sq(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return s;
}

double frobenius_norm(const DenseMatrix& a) { return std::sqrt(frobenius_norm_sq(a)); }

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.rows == b.rows && a.cols == b.cols);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool all_finite(const DenseMatrix& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseMatrix out(rows, cols);
    for (double& v : out.data) v = rng.normal();
    return out;
}

DenseMatrix identity_matrix(std::size_t n) {
    DenseMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out.data[i * n + i] = 1.0;
    return out;
}

}  // namespace permkron
