#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "permkron/errors.hpp"
#include "permkron/kron.hpp"
#include "permkron/matrix.hpp"
#include "permkron/optimizer.hpp"
#include "permkron/permutation.hpp"

namespace permkron {

// Linear layer backed by a permuted Kronecker decomposition:
// forward(x) = P^-1 * (sum_i A_i kron B_i) * (C^-1 * x) + bias, the inverse
// gathers undoing the decomposition's P*W*C ~= sum. Permutations stay index
// vectors; the dense weight matrix is never materialized.
struct CompressedLinear {
    PermutedKronDecomposition dec;
    std::optional<std::vector<double>> bias;  // length m

    // Precomputed so forward gathers are O(m + n) lookups.
    PermutationVec p_inv, c_inv;

    static CompressedLinear from_decomposition(PermutedKronDecomposition d,
                                               std::optional<std::vector<double>> bias_vec);

    std::size_t in_dim() const { return dec.n; }
    std::size_t out_dim() const { return dec.m; }
};

// X holds one sample per row (batch x n); output is batch x m.
Result<DenseMatrix> linear_forward(const CompressedLinear& layer, const DenseMatrix& x,
                                   FlopCounter* fc = nullptr);

struct LinearGradients {
    std::vector<DenseMatrix> d_a;  // per term
    std::vector<DenseMatrix> d_b;
    std::vector<double> d_bias;    // empty when layer has no bias
    DenseMatrix d_input;
};

// Gradients w.r.t. every A_i, B_i, bias and the input; P and C are discrete
// and stay fixed.
Result<LinearGradients> linear_backward(const CompressedLinear& layer, const DenseMatrix& x,
                                        const DenseMatrix& upstream);

// Embedding stored as A kron B: vocab = rows(A)*rows(B), dim = cols(A)*cols(B).
// Optional permutations follow the same inverse-gather convention as
// CompressedLinear; default plans leave embeddings unpermuted.
struct CompressedEmbedding {
    DenseMatrix a;
    DenseMatrix b;
    std::optional<PermutationVec> row_perm;  // length vocab, the decomposition's P
    std::optional<PermutationVec> col_perm;  // length dim, the decomposition's C

    std::size_t vocab() const { return a.rows * b.rows; }
    std::size_t dim() const { return a.cols * b.cols; }
};

// Row t of the (virtual) vocab x dim matrix per token, O(dim) each.
Result<DenseMatrix> embedding_lookup(const CompressedEmbedding& emb, const std::vector<std::size_t>& tokens);

struct EmbeddingGradients {
    DenseMatrix d_a;
    DenseMatrix d_b;
};

Result<EmbeddingGradients> embedding_backward(const CompressedEmbedding& emb,
                                              const std::vector<std::size_t>& tokens,
                                              const DenseMatrix& upstream);

}  // namespace permkron
