#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "permkron/layers.hpp"
#include "permkron/optimizer.hpp"
#include "permkron/rng.hpp"

using namespace permkron;

namespace {

PermutedKronDecomposition random_decomposition(const KronShape& s, std::size_t rank, bool perms, Rng& rng) {
    PermutedKronDecomposition d;
    d.factors.shape = s;
    for (std::size_t k = 0; k < rank; ++k)
        d.factors.terms.push_back({random_matrix(s.m1, s.n1, rng), random_matrix(s.m2, s.n2, rng)});
    d.m = s.rows();
    d.n = s.cols();
    d.use_permutations = perms;
    d.p = perms ? random_permutation(d.m, rng) : PermutationVec::identity(d.m);
    d.c = perms ? random_permutation(d.n, rng) : PermutationVec::identity(d.n);
    return d;
}

// The dense matrix the layer stands in for: permuting its rows by P and
// columns by C yields the reconstruction, so W = unpermute(reconstruction).
DenseMatrix dense_equivalent(const CompressedLinear& layer) {
    const DenseMatrix k = kron_reconstruct(layer.dec.factors);
    return permute_rows_cols(k, layer.dec.p.inverse(), layer.dec.c.inverse());
}

DenseMatrix dense_embedding(const CompressedEmbedding& emb) {
    DenseMatrix k = oracle::kron_dense(emb.a, emb.b);
    const PermutationVec p = emb.row_perm ? *emb.row_perm : PermutationVec::identity(emb.vocab());
    const PermutationVec c = emb.col_perm ? *emb.col_perm : PermutationVec::identity(emb.dim());
    return permute_rows_cols(k, p.inverse(), c.inverse());
}

double max_abs(const DenseMatrix& a, const DenseMatrix& b) {
    REQUIRE(a.rows == b.rows);
    REQUIRE(a.cols == b.cols);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace

TEST_CASE("identity factors with identity permutations pass inputs through") {
    PermutedKronDecomposition d;
    d.factors.shape = {2, 2, 3, 3};
    DenseMatrix a(2, 2), b(3, 3);
    for (std::size_t i = 0; i < 2; ++i) a.data[i * 2 + i] = 1.0;
    for (std::size_t i = 0; i < 3; ++i) b.data[i * 3 + i] = 1.0;
    d.factors.terms.push_back({a, b});
    d.m = 6;
    d.n = 6;
    d.p = PermutationVec::identity(6);
    d.c = PermutationVec::identity(6);
    const CompressedLinear layer = CompressedLinear::from_decomposition(d, std::nullopt);

    Rng rng(101);
    const DenseMatrix x = random_matrix(4, 6, rng);
    auto y = linear_forward(layer, x);
    REQUIRE(y.ok());
    CHECK(max_abs(y.value(), x) == 0.0);
}

TEST_CASE("forward matches the dense equivalent") {
    Rng rng(102);
    for (int i = 0; i < 100; ++i) {
        const KronShape s{2 + static_cast<std::size_t>(i % 2), 3, 2, 2 + static_cast<std::size_t>(i % 3)};
        const bool perms = i % 4 != 0;
        const bool with_bias = i % 3 != 0;
        PermutedKronDecomposition d = random_decomposition(s, 1 + i % 2, perms, rng);
        std::optional<std::vector<double>> bias;
        if (with_bias) {
            bias.emplace(d.m);
            for (double& v : *bias) v = rng.normal();
        }
        const CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), bias);

        const DenseMatrix x = random_matrix(3, layer.in_dim(), rng);
        auto y = linear_forward(layer, x);
        REQUIRE(y.ok());
        DenseMatrix expected = matmul_bt(x, dense_equivalent(layer));
        if (with_bias)
            for (std::size_t r = 0; r < expected.rows; ++r)
                for (std::size_t c = 0; c < expected.cols; ++c) expected.data[r * expected.cols + c] += (*bias)[c];
        CHECK(max_abs(y.value(), expected) < 1e-10);
    }
}

TEST_CASE("a layer built from a decomposition approximates the original matrix") {
    const KronShape s{3, 3, 4, 4};
    const auto inst = oracle::make_planted(s, 1, 777);
    DecomposeOptions opts;
    opts.shape = s;
    opts.rank = 1;
    auto res = decompose(inst.w, opts, 5);
    REQUIRE(res.ok());
    REQUIRE(res.value().decomposition.residual < 1e-8 * frobenius_norm(inst.w));
    const CompressedLinear layer =
        CompressedLinear::from_decomposition(res.value().decomposition, std::nullopt);

    Rng rng(103);
    const DenseMatrix x = random_matrix(5, 12, rng);
    auto y = linear_forward(layer, x);
    REQUIRE(y.ok());
    const DenseMatrix expected = matmul_bt(x, inst.w);
    CHECK(max_abs(y.value(), expected) < 1e-6);
}

TEST_CASE("zero upstream gradient zeroes the whole bundle") {
    Rng rng(104);
    PermutedKronDecomposition d = random_decomposition({2, 2, 3, 3}, 2, true, rng);
    std::vector<double> bias(d.m, 1.5);
    const CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), bias);
    const DenseMatrix x = random_matrix(4, layer.in_dim(), rng);
    auto g = linear_backward(layer, x, DenseMatrix(4, layer.out_dim()));
    REQUIRE(g.ok());
    for (const DenseMatrix& da : g.value().d_a)
        for (double v : da.data) CHECK(v == 0.0);
    for (const DenseMatrix& db : g.value().d_b)
        for (double v : db.data) CHECK(v == 0.0);
    for (double v : g.value().d_bias) CHECK(v == 0.0);
    for (double v : g.value().d_input.data) CHECK(v == 0.0);
}

TEST_CASE("factor and bias gradients agree with finite differences") {
    Rng rng(105);
    for (int trial = 0; trial < 5; ++trial) {
        PermutedKronDecomposition d = random_decomposition({2, 3, 3, 2}, 2, trial % 2 == 0, rng);
        std::vector<double> bias(d.m);
        for (double& v : bias) v = rng.normal();
        CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), bias);

        const DenseMatrix x = random_matrix(3, layer.in_dim(), rng);
        const DenseMatrix upstream = random_matrix(3, layer.out_dim(), rng);
        auto g = linear_backward(layer, x, upstream);
        REQUIRE(g.ok());

        // Scalar objective sum(upstream . forward); its exact gradient is the
        // backward result, finite differences recompute it from scratch.
        const auto eval = [&]() {
            auto y = linear_forward(layer, x);
            REQUIRE(y.ok());
            double acc = 0.0;
            for (std::size_t i = 0; i < y.value().data.size(); ++i) acc += upstream.data[i] * y.value().data[i];
            return acc;
        };

        for (std::size_t k = 0; k < layer.dec.factors.terms.size(); ++k) {
            auto fd_a = oracle::fd_gradient(eval, layer.dec.factors.terms[k].a.data, 1e-6);
            CHECK(oracle::max_rel_diff(g.value().d_a[k].data, fd_a) < 1e-5);
            auto fd_b = oracle::fd_gradient(eval, layer.dec.factors.terms[k].b.data, 1e-6);
            CHECK(oracle::max_rel_diff(g.value().d_b[k].data, fd_b) < 1e-5);
        }
        auto fd_bias = oracle::fd_gradient(eval, *layer.bias, 1e-6);
        CHECK(oracle::max_rel_diff(g.value().d_bias, fd_bias) < 1e-5);
    }
}

TEST_CASE("input gradient matches the dense transpose product") {
    Rng rng(106);
    for (int trial = 0; trial < 20; ++trial) {
        PermutedKronDecomposition d = random_decomposition({2, 2, 2, 3}, 1 + trial % 2, true, rng);
        const CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), std::nullopt);
        const DenseMatrix x = random_matrix(3, layer.in_dim(), rng);
        const DenseMatrix upstream = random_matrix(3, layer.out_dim(), rng);
        auto g = linear_backward(layer, x, upstream);
        REQUIRE(g.ok());
        // y = x W^T means dL/dx = upstream W.
        const DenseMatrix expected = matmul(upstream, dense_equivalent(layer));
        CHECK(max_abs(g.value().d_input, expected) < 1e-10);
    }
}

TEST_CASE("backward rejects mismatched shapes") {
    Rng rng(107);
    PermutedKronDecomposition d = random_decomposition({2, 2, 2, 2}, 1, false, rng);
    const CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), std::nullopt);
    CHECK(!linear_forward(layer, DenseMatrix(2, 5)).ok());
    CHECK(!linear_backward(layer, DenseMatrix(2, 4), DenseMatrix(3, 4)).ok());
    CHECK(!linear_backward(layer, DenseMatrix(2, 4), DenseMatrix(2, 5)).ok());
}

TEST_CASE("embedding with scalar B reads rows of A") {
    Rng rng(108);
    CompressedEmbedding emb;
    emb.a = random_matrix(6, 4, rng);
    emb.b = DenseMatrix(1, 1);
    emb.b.data[0] = 1.0;
    auto rows = embedding_lookup(emb, {0, 3, 5, 3});
    REQUIRE(rows.ok());
    const std::vector<std::size_t> want{0, 3, 5, 3};
    for (std::size_t s = 0; s < want.size(); ++s)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(rows.value().data[s * 4 + j] == emb.a.data[want[s] * 4 + j]);
}

TEST_CASE("embedding rows match the dense virtual matrix") {
    Rng rng(109);
    for (int trial = 0; trial < 20; ++trial) {
        CompressedEmbedding emb;
        emb.a = random_matrix(3, 2, rng);
        emb.b = random_matrix(4, 3, rng);
        if (trial % 2 == 0) {
            emb.row_perm = random_permutation(12, rng);
            emb.col_perm = random_permutation(6, rng);
        }
        std::vector<std::size_t> all(emb.vocab());
        for (std::size_t t = 0; t < all.size(); ++t) all[t] = t;
        auto rows = embedding_lookup(emb, all);
        REQUIRE(rows.ok());
        CHECK(max_abs(rows.value(), dense_embedding(emb)) < 1e-12);
    }
}

TEST_CASE("embedding rejects out-of-range tokens") {
    Rng rng(110);
    CompressedEmbedding emb;
    emb.a = random_matrix(2, 2, rng);
    emb.b = random_matrix(2, 2, rng);
    auto bad = embedding_lookup(emb, {4});
    REQUIRE(!bad.ok());
    CHECK(bad.error().kind == ErrorKind::validation);
}

TEST_CASE("embedding gradients agree with finite differences") {
    Rng rng(111);
    for (int trial = 0; trial < 5; ++trial) {
        CompressedEmbedding emb;
        emb.a = random_matrix(3, 2, rng);
        emb.b = random_matrix(2, 2, rng);
        if (trial % 2 == 0) {
            emb.row_perm = random_permutation(6, rng);
            emb.col_perm = random_permutation(4, rng);
        }
        const std::vector<std::size_t> tokens{1, 4, 1, 0};
        const DenseMatrix upstream = random_matrix(tokens.size(), emb.dim(), rng);
        auto g = embedding_backward(emb, tokens, upstream);
        REQUIRE(g.ok());

        const auto eval = [&]() {
            auto y = embedding_lookup(emb, tokens);
            REQUIRE(y.ok());
            double acc = 0.0;
            for (std::size_t i = 0; i < y.value().data.size(); ++i) acc += upstream.data[i] * y.value().data[i];
            return acc;
        };
        auto fd_a = oracle::fd_gradient(eval, emb.a.data, 1e-6);
        CHECK(oracle::max_rel_diff(g.value().d_a.data, fd_a) < 1e-5);
        auto fd_b = oracle::fd_gradient(eval, emb.b.data, 1e-6);
        CHECK(oracle::max_rel_diff(g.value().d_b.data, fd_b) < 1e-5);
    }
}

TEST_CASE("tokens that were never looked up leave their A rows untouched") {
    Rng rng(112);
    CompressedEmbedding emb;
    emb.a = random_matrix(5, 3, rng);
    emb.b = DenseMatrix(1, 1);
    emb.b.data[0] = 1.0;
    const std::vector<std::size_t> tokens{2, 2, 4};
    const DenseMatrix upstream = random_matrix(3, 3, rng);
    auto g = embedding_backward(emb, tokens, upstream);
    REQUIRE(g.ok());
    for (std::size_t i = 0; i < 5; ++i) {
        const bool touched = i == 2 || i == 4;
        double row_norm = 0.0;
        for (std::size_t j = 0; j < 3; ++j) row_norm += std::abs(g.value().d_a.data[i * 3 + j]);
        if (touched)
            CHECK(row_norm > 0.0);
        else
            CHECK(row_norm == 0.0);
    }
}

TEST_CASE("forward flop count is the kron matvec cost plus bias adds") {
    Rng rng(113);
    PermutedKronDecomposition d = random_decomposition({3, 3, 4, 4}, 2, true, rng);
    std::vector<double> bias(d.m, 0.25);
    const CompressedLinear layer = CompressedLinear::from_decomposition(std::move(d), bias);

    FlopCounter one;
    std::vector<double> probe(layer.in_dim(), 1.0);
    REQUIRE(kron_matvec(layer.dec.factors, probe, &one).ok());

    const std::size_t batch = 7;
    FlopCounter fc;
    REQUIRE(linear_forward(layer, random_matrix(batch, layer.in_dim(), rng), &fc).ok());
    CHECK(fc.muls == batch * one.muls);
    CHECK(fc.adds == batch * (one.adds + layer.out_dim()));
}
