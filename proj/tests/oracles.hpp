#pragma once

// Independent reference implementations the tests check the library against.
// Everything here recomputes from definitions (entrywise loops, exhaustive
// enumeration, finite differences) and shares no index math with src/.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "permkron/kron.hpp"
#include "permkron/matrix.hpp"
#include "permkron/permutation.hpp"

namespace permkron::oracle {

// Entrywise Kronecker definition: K[i1*p+i2][j1*q+j2] = A[i1][j1]*B[i2][j2].
DenseMatrix kron_dense(const DenseMatrix& a, const DenseMatrix& b);

// Rearrangement by its block definition, independent index math.
DenseMatrix rearrange_blocks(const DenseMatrix& w, std::size_t m1, std::size_t n1, std::size_t m2,
                             std::size_t n2);

// Minimum assignment cost over all n! permutations; ties keep the
// lexicographically smallest permutation. Practical for n <= 8.
struct BruteAssignment {
    std::vector<std::size_t> perm;
    double objective = 0.0;
};
BruteAssignment brute_force_assignment(const DenseMatrix& d);

// sqrt(sum of sigma_i^2 for i >= rank) from a full Jacobi SVD of r_mat: the
// Eckart-Young optimal rank-`rank` residual.
double svd_tail_residual(const DenseMatrix& r_mat, std::size_t rank);

// Global optimum of min_{P,C} (best rank-1 Kronecker residual of P*W*C) by
// scoring all (4!)^2 permutation pairs of a 4x4 matrix under the 2x2 (x) 2x2
// split. Each pair is scored with the Jacobi tail energy above.
double exhaustive_pkron_residual_4x4(const DenseMatrix& w);

// W = row/column shuffle of a random rank-`rank` Kronecker sum; `w_norm` is
// ||W||_F. Exact recovery is possible by construction.
struct PlantedInstance {
    DenseMatrix w;
    PermutationVec row_shuffle;
    PermutationVec col_shuffle;
};
PlantedInstance make_planted(const KronShape& shape, std::size_t rank, std::uint64_t seed);

// Central finite differences of eval at every parameter, mutating params in
// place and restoring them.
std::vector<double> fd_gradient(const std::function<double()>& eval, std::span<double> params, double eps);

// max_i |a_i - b_i| / max(1, |b_i|) over aligned entries.
double max_rel_diff(std::span<const double> a, std::span<const double> b);

// Mean cross-entropy of row-softmaxed logits against integer labels,
// recomputed from scratch.
double reference_cross_entropy(const DenseMatrix& logits, const std::vector<std::size_t>& labels);

}  // namespace permkron::oracle
