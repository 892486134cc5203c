#pragma once

#include <cstddef>
#include <vector>

#include "permkron/rng.hpp"

namespace permkron {

// Row-major dense matrix of f64; the single carrier for weights, factors and
// cost matrices. Compute dtype is always f64 regardless of storage dtype.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    DenseMatrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T without forming the transpose.
DenseMatrix matmul_bt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double frobenius_norm_sq(const DenseMatrix& a);
// ||a - b||_F; shapes must match.
double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);
double dot(const std::vector<double>& a, const std::vector<double>& b);

bool all_finite(const DenseMatrix& a);

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng);
DenseMatrix identity_matrix(std::size_t n);

}  // namespace permkron
