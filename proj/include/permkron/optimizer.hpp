#pragma once

#include <cstdint>
#include <vector>

#include "permkron/assignment.hpp"
#include "permkron/errors.hpp"
#include "permkron/kron.hpp"
#include "permkron/matrix.hpp"
#include "permkron/permutation.hpp"

namespace permkron {

// The compressed form of one weight matrix: P*W*C ~= sum_i A_i kron B_i.
struct PermutedKronDecomposition {
    PermutationVec p;  // rows, length m
    PermutationVec c;  // cols, length n
    KronSum factors;
    std::size_t m = 0, n = 0;
    bool use_permutations = true;
    double residual = 0.0;  // final ||P*W*C - sum||_F
};

struct TraceRecord {
    std::size_t iteration = 0;
    double after_svd = 0.0;
    double after_p = 0.0;
    double after_c = 0.0;
};

// Per-iteration objectives of the descent that produced the returned tuple.
// Non-increasing across consecutive entries by construction: each step adopts
// its candidate only when the freshly evaluated objective does not rise.
struct OptimizerTrace {
    std::vector<TraceRecord> records;
};

struct DecomposeOptions {
    KronShape shape;
    std::size_t rank = 1;
    bool use_permutations = true;
    std::size_t max_alt_iters = 10;
    double rel_improvement_stop = 1e-9;
    // Descent trajectories beyond the identity-initialized one: trajectory 0
    // always starts from identity permutations (which keeps the final result
    // at least as good as the permutation-free baseline); trajectories
    // 1..restarts-1 start from seeded random permutations. The best-seen
    // tuple across trajectories is returned, and the trace is the winning
    // trajectory's own record.
    std::size_t restarts = 8;
    // Adds candidate starts recovered from eigenvector ratio structure of
    // W*W^T and W^T*W; exact on noiselessly permuted Kronecker products,
    // inert otherwise.
    bool spectral_init = true;
    std::size_t spectral_max_dim = 256;
    CostKind cost = CostKind::squared_l2;
};

DecomposeOptions options_from_plan(const KronShape& shape, std::size_t rank, bool use_permutations,
                                   std::size_t max_alt_iters);

struct DecomposeResult {
    PermutedKronDecomposition decomposition;
    OptimizerTrace trace;
};

// Alternating minimization: per iteration (1) factors <- nearest_kron(P*W*C),
// (2) P <- assignment matching rows of W*C to the reconstruction,
// (3) C <- assignment matching columns of P*W to the reconstruction; stops on
// max_alt_iters or relative improvement < rel_improvement_stop; returns the
// best-seen tuple. Deterministic given seed.
Result<DecomposeResult> decompose(const DenseMatrix& w, const DecomposeOptions& opts, std::uint64_t seed);

// ||P*W*C - sum_i A_i kron B_i||_F via blockwise accumulation; never
// materializes the Kronecker sum.
Result<double> objective(const DenseMatrix& w, const PermutedKronDecomposition& d);

// r*(m1*n1 + m2*n2), plus m + n when permutations are enabled.
std::uint64_t parameter_count(const PermutedKronDecomposition& d);

// Candidate row permutations making gram[p][:,p] look like a Kronecker
// product of a d1 x d1 and a d2 x d2 Gram factor. Empty when no consistent
// grid is found. Exposed for tests.
std::vector<PermutationVec> spectral_grid_candidates(const DenseMatrix& gram, std::size_t d1, std::size_t d2,
                                                     std::size_t max_candidates = 4);

}  // namespace permkron
