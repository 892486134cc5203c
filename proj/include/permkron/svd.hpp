#pragma once

#include <cstdint>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/matrix.hpp"

namespace permkron {

// U is rows x k, V is cols x k, vectors in columns, singular values sorted
// descending. k = requested rank for the truncated solver, min(rows, cols)
// for the dense one.
struct SvdResult {
    std::vector<double> singular_values;
    DenseMatrix u;
    DenseMatrix v;
};

// Deterministic power iteration with Gram-Schmidt deflation. Converges one
// triplet at a time: stop when successive sigma estimates differ by < 1e-12
// relative, hard cap 10,000 iterations per triplet. Start vectors come from
// the seed, so identical inputs give bitwise-identical results.
Result<SvdResult> truncated_svd_power(const DenseMatrix& a, std::size_t rank, std::uint64_t seed);

// One-sided Jacobi SVD; the test oracle for the power-iteration path.
// Intended for max(rows, cols) <= 64 but not enforced.
SvdResult jacobi_svd(const DenseMatrix& a);

// Eigenvalues sorted by descending magnitude, eigenvectors in columns.
struct SymEigResult {
    std::vector<double> eigenvalues;
    DenseMatrix vectors;
};

// Cyclic two-sided Jacobi for symmetric input (symmetry asserted).
SymEigResult eigen_sym_jacobi(const DenseMatrix& a);

}  // namespace permkron
