#pragma once

#include "permkron/errors.hpp"
#include "permkron/matrix.hpp"
#include "permkron/permutation.hpp"

namespace permkron {

// Appendix derivation uses squared L2 row distances; the printed equation form
// is L1. Squared L2 is the default (the proof of assignment equivalence holds
// for it); L1 is the opt-in variant.
enum class CostKind { squared_l2, l1 };

// D[i][j] = distance between row i of w1 and row j of w2.
Result<DenseMatrix> build_cost_matrix(const DenseMatrix& w1, const DenseMatrix& w2,
                                      CostKind kind = CostKind::squared_l2);

struct AssignmentResult {
    PermutationVec perm;  // perm(i) = column assigned to row i
    double objective = 0.0;
};

// Exact minimum-cost assignment: Jonker-Volgenant-style shortest augmenting
// paths with potentials, O(n^3). Deterministic: augmentation scans columns in
// ascending order, so ties go to the smallest column index (uniform costs
// yield the identity).
Result<AssignmentResult> hungarian(const DenseMatrix& d);

struct RowPermutationResult {
    PermutationVec perm;   // (P*w1)[i] = w1[perm(i)]
    double objective = 0.0;  // ||P*w1 - w2||_F^2 at the optimum
};

// P minimizing ||P*w1 - w2||_F^2, via hungarian on the row-distance costs.
Result<RowPermutationResult> solve_row_permutation(const DenseMatrix& w1, const DenseMatrix& w2,
                                                   CostKind kind = CostKind::squared_l2);

// tr(P*K) for K = -2*w1*w2^T: equals sum_i K[perm(i)][i]. Satisfies
// ||P*w1 - w2||_F^2 = ||w1||_F^2 + ||w2||_F^2 + tr(P*K) for every perm.
Result<double> trace_objective(const PermutationVec& perm, const DenseMatrix& w1, const DenseMatrix& w2);

}  // namespace permkron
