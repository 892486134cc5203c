#pragma once

#include <cstddef>
#include <vector>

#include "permkron/matrix.hpp"
#include "permkron/rng.hpp"

namespace permkron {

// Permutation matrix stored as an index vector: applying P to rows means
// (P*W)[i] = W[map[i]]. n parameters instead of n^2.
struct PermutationVec {
    std::vector<std::size_t> map;

    PermutationVec() = default;
    explicit PermutationVec(std::vector<std::size_t> m) : map(std::move(m)) {}

    std::size_t size() const { return map.size(); }
    std::size_t operator()(std::size_t i) const { return map[i]; }

    static PermutationVec identity(std::size_t n);
    PermutationVec inverse() const;
    // (this ∘ other)(i) = this(other(i)), matching matrix product P_this * P_other.
    PermutationVec compose(const PermutationVec& other) const;
    bool is_identity() const;
};

bool is_permutation(const PermutationVec& p);
PermutationVec random_permutation(std::size_t n, Rng& rng);

// (P*W)[i] = W[p(i)].
DenseMatrix permute_rows(const DenseMatrix& w, const PermutationVec& p);
// (W*C)[:,j] = W[:,c(j)].
DenseMatrix permute_cols(const DenseMatrix& w, const PermutationVec& c);
// P*W*C in one pass.
DenseMatrix permute_rows_cols(const DenseMatrix& w, const PermutationVec& p, const PermutationVec& c);

DenseMatrix permutation_to_matrix(const PermutationVec& p);

}  // namespace permkron
