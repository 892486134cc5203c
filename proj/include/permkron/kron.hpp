#pragma once

#include <cstdint>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/matrix.hpp"

namespace permkron {

struct KronShape {
    std::size_t m1 = 0, n1 = 0, m2 = 0, n2 = 0;

    std::size_t rows() const { return m1 * m2; }
    std::size_t cols() const { return n1 * n2; }
    std::size_t max_rank() const { return std::min(m1 * n1, m2 * n2); }
};

// One A (m1 x n1) kron B (m2 x n2) term.
struct KronFactorPair {
    DenseMatrix a;
    DenseMatrix b;
};

// Sum of rank terms sharing one shape.
struct KronSum {
    KronShape shape;
    std::vector<KronFactorPair> terms;
};

// Exact multiply/add tally; gathers cost zero flops.
struct FlopCounter {
    std::uint64_t muls = 0;
    std::uint64_t adds = 0;

    std::uint64_t total() const { return muls + adds; }
    void count_macs(std::uint64_t n) {
        muls += n;
        adds += n;
    }
};

// Predicted counter readings, exact integers.
std::uint64_t kron_matvec_flops(const KronShape& s, std::size_t rank);
std::uint64_t dense_matvec_flops(std::size_t m, std::size_t n);

// R(W): row i1*n1 + j1 holds block W[i1*m2.. , j1*n2..] flattened row-major.
// Bijective reindexing, so norm-preserving; R(A kron B) = vec(A) vec(B)^T.
Result<DenseMatrix> rearrange(const DenseMatrix& w, const KronShape& s);
// Inverse of rearrange.
Result<DenseMatrix> rearrange_inverse(const DenseMatrix& r, const KronShape& s);

struct NearestKronResult {
    KronSum sum;
    double residual = 0.0;            // ||W - sum||_F
    std::size_t effective_rank = 0;   // < requested rank when trailing sigmas degenerate
};

// Best rank-r Kronecker sum by truncated SVD of R(W) (power iteration with
// deflation, deterministic given seed). Terms are balanced as
// A_i = sqrt(sigma_i) * reshape(u_i), B_i = sqrt(sigma_i) * reshape(v_i), with
// the sign fixed so the first nonzero entry of vec(A_i) is non-negative.
// Terms with sigma_i < 1e-14 * sigma_1 are zero-filled.
Result<NearestKronResult> nearest_kron(const DenseMatrix& w, const KronShape& s, std::size_t rank,
                                       std::uint64_t seed);

// Dense sum; testing and reporting only, never the inference path.
DenseMatrix kron_reconstruct(const KronSum& ks);

// (sum_i A_i kron B_i) * x without materializing any Kronecker product:
// per term, y += vec(A * X * B^T) with X the n1 x n2 row-major reshape of x.
// Cost r * (m2*n2*n1 + m1*n1*m2) MACs.
Result<std::vector<double>> kron_matvec(const KronSum& ks, const std::vector<double>& x,
                                        FlopCounter* fc = nullptr);
// Column-wise extension: X has n1*n2 rows, one input vector per column.
Result<DenseMatrix> kron_matmat(const KronSum& ks, const DenseMatrix& x, FlopCounter* fc = nullptr);

// (sum_i A_i kron B_i)^T * g; per term vec(A^T * G * B) with G the
// m1 x m2 reshape of g. Backward pass companion of kron_matvec.
Result<std::vector<double>> kron_matvec_t(const KronSum& ks, const std::vector<double>& g,
                                          FlopCounter* fc = nullptr);

}  // namespace permkron
