#include "permkron/layers.hpp"

#include <cassert>
#include <string>

namespace permkron {

CompressedLinear CompressedLinear::from_decomposition(PermutedKronDecomposition d,
                                                      std::optional<std::vector<double>> bias_vec) {
    CompressedLinear layer;
    assert(!bias_vec || bias_vec->size() == d.m);
    layer.p_inv = d.p.inverse();
    layer.c_inv = d.c.inverse();
    layer.dec = std::move(d);
    layer.bias = std::move(bias_vec);
    return layer;
}

Result<DenseMatrix> linear_forward(const CompressedLinear& layer, const DenseMatrix& x, FlopCounter* fc) {
    const std::size_t n = layer.in_dim();
    const std::size_t m = layer.out_dim();
    if (x.cols != n)
        return make_error(ErrorKind::shape,
                          "input width " + std::to_string(x.cols) + " != layer input dim " + std::to_string(n));

    DenseMatrix out(x.rows, m);
    std::vector<double> xc(n);
    for (std::size_t s = 0; s < x.rows; ++s) {
        const double* row = &x.data[s * n];
        // The stored W satisfies W[i][j] = K[p_inv(i)][c_inv(j)], so W*x
        // gathers the input with c and the output with p_inv.
        for (std::size_t j = 0; j < n; ++j) xc[j] = row[layer.dec.c(j)];
        auto z = kron_matvec(layer.dec.factors, xc, fc);
        if (!z) return z.error();
        double* dst = &out.data[s * m];
        for (std::size_t i = 0; i < m; ++i) dst[i] = z.value()[layer.p_inv(i)];
        if (layer.bias) {
            const std::vector<double>& bias = *layer.bias;
            for (std::size_t i = 0; i < m; ++i) dst[i] += bias[i];
            if (fc) fc->adds += m;
        }
    }
    return out;
}

Result<LinearGradients> linear_backward(const CompressedLinear& layer, const DenseMatrix& x,
                                        const DenseMatrix& upstream) {
    const KronShape& s = layer.dec.factors.shape;
    const std::size_t n = layer.in_dim();
    const std::size_t m = layer.out_dim();
    if (x.cols != n) return make_error(ErrorKind::shape, "input width does not match layer");
    if (upstream.rows != x.rows || upstream.cols != m)
        return make_error(ErrorKind::shape, "upstream gradient shape does not match layer output");

    LinearGradients g;
    const std::size_t rank = layer.dec.factors.terms.size();
    g.d_a.assign(rank, DenseMatrix(s.m1, s.n1));
    g.d_b.assign(rank, DenseMatrix(s.m2, s.n2));
    if (layer.bias) g.d_bias.assign(m, 0.0);
    g.d_input = DenseMatrix(x.rows, n);

    std::vector<double> xc(n), gz(m);
    DenseMatrix xm(s.n1, s.n2), gm(s.m1, s.m2);
    for (std::size_t smp = 0; smp < x.rows; ++smp) {
        const double* xrow = &x.data[smp * n];
        const double* urow = &upstream.data[smp * m];
        // Undo the output gather: y[i] = z[p_inv(i)] means dz[t] = g[p(t)].
        for (std::size_t j = 0; j < n; ++j) xc[j] = xrow[layer.dec.c(j)];
        for (std::size_t t = 0; t < m; ++t) gz[t] = urow[layer.dec.p(t)];
        xm.data = xc;
        gm.data = gz;

        for (std::size_t k = 0; k < rank; ++k) {
            const KronFactorPair& term = layer.dec.factors.terms[k];
            // dA += G * B * X^T with G = reshape(gz), X = reshape(xc).
            for (std::size_t i1 = 0; i1 < s.m1; ++i1)
                for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
                    double acc = 0.0;
                    for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
                        const double gv = gm.data[i1 * s.m2 + i2];
                        if (gv == 0.0) continue;
                        const double* brow = &term.b.data[i2 * s.n2];
                        const double* xr = &xm.data[j1 * s.n2];
                        double inner = 0.0;
                        for (std::size_t j2 = 0; j2 < s.n2; ++j2) inner += brow[j2] * xr[j2];
                        acc += gv * inner;
                    }
                    g.d_a[k].data[i1 * s.n1 + j1] += acc;
                }
            // dB += G^T * A * X, accumulated as sum over (i1, j1) of
            // G[i1,:]^T outer contributions.
            for (std::size_t i2 = 0; i2 < s.m2; ++i2)
                for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
                    double acc = 0.0;
                    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
                        const double gv = gm.data[i1 * s.m2 + i2];
                        if (gv == 0.0) continue;
                        const double* arow = &term.a.data[i1 * s.n1];
                        double inner = 0.0;
                        for (std::size_t j1 = 0; j1 < s.n1; ++j1) inner += arow[j1] * xm.data[j1 * s.n2 + j2];
                        acc += gv * inner;
                    }
                    g.d_b[k].data[i2 * s.n2 + j2] += acc;
                }
        }

        auto dxc = kron_matvec_t(layer.dec.factors, gz);
        if (!dxc) return dxc.error();
        double* dxrow = &g.d_input.data[smp * n];
        // Undo the input gather: xc[j] = x[c(j)] means dx[t] = dxc[c_inv(t)].
        for (std::size_t t = 0; t < n; ++t) dxrow[t] = dxc.value()[layer.c_inv(t)];

        if (layer.bias)
            for (std::size_t i = 0; i < m; ++i) g.d_bias[i] += urow[i];
    }
    return g;
}

Result<DenseMatrix> embedding_lookup(const CompressedEmbedding& emb, const std::vector<std::size_t>& tokens) {
    const std::size_t v = emb.vocab();
    const std::size_t d = emb.dim();
    const std::size_t vb = emb.b.rows;
    const std::size_t ca = emb.a.cols;
    const std::size_t cb = emb.b.cols;

    DenseMatrix out(tokens.size(), d);
    std::vector<double> kr(d);
    const PermutationVec row_inv = emb.row_perm ? emb.row_perm->inverse() : PermutationVec{};
    const PermutationVec col_inv = emb.col_perm ? emb.col_perm->inverse() : PermutationVec{};
    for (std::size_t s = 0; s < tokens.size(); ++s) {
        const std::size_t t = tokens[s];
        if (t >= v)
            return make_error(ErrorKind::validation,
                              "token id " + std::to_string(t) + " out of range [0, " + std::to_string(v) + ")");
        const std::size_t i = emb.row_perm ? row_inv(t) : t;
        const std::size_t i1 = i / vb;
        const std::size_t i2 = i % vb;
        // Row i of A kron B = A[i1,:] kron B[i2,:].
        for (std::size_t j1 = 0; j1 < ca; ++j1) {
            const double av = emb.a.data[i1 * ca + j1];
            const double* brow = &emb.b.data[i2 * cb];
            for (std::size_t j2 = 0; j2 < cb; ++j2) kr[j1 * cb + j2] = av * brow[j2];
        }
        double* dst = &out.data[s * d];
        // Virtual row t is V[t][j] = K[row_inv(t)][col_inv(j)].
        if (emb.col_perm) {
            for (std::size_t j = 0; j < d; ++j) dst[j] = kr[col_inv(j)];
        } else {
            for (std::size_t j = 0; j < d; ++j) dst[j] = kr[j];
        }
    }
    return out;
}

Result<EmbeddingGradients> embedding_backward(const CompressedEmbedding& emb,
                                              const std::vector<std::size_t>& tokens,
                                              const DenseMatrix& upstream) {
    const std::size_t v = emb.vocab();
    const std::size_t d = emb.dim();
    if (upstream.rows != tokens.size() || upstream.cols != d)
        return make_error(ErrorKind::shape, "upstream gradient shape does not match lookups");

    const std::size_t vb = emb.b.rows;
    const std::size_t ca = emb.a.cols;
    const std::size_t cb = emb.b.cols;

    EmbeddingGradients g;
    g.d_a = DenseMatrix(emb.a.rows, ca);
    g.d_b = DenseMatrix(emb.b.rows, cb);

    std::vector<double> u(d);
    const PermutationVec row_inv = emb.row_perm ? emb.row_perm->inverse() : PermutationVec{};
    for (std::size_t s = 0; s < tokens.size(); ++s) {
        const std::size_t t = tokens[s];
        if (t >= v) return make_error(ErrorKind::validation, "token id " + std::to_string(t) + " out of range");
        const std::size_t i = emb.row_perm ? row_inv(t) : t;
        const std::size_t i1 = i / vb;
        const std::size_t i2 = i % vb;
        const double* urow = &upstream.data[s * d];
        // out[j] = kr[col_inv(j)] means d kr[b] = u[col(b)].
        if (emb.col_perm) {
            const PermutationVec& c = *emb.col_perm;
            for (std::size_t b = 0; b < d; ++b) u[b] = urow[c(b)];
        } else {
            for (std::size_t j = 0; j < d; ++j) u[j] = urow[j];
        }
        for (std::size_t j1 = 0; j1 < ca; ++j1) {
            const double* brow = &emb.b.data[i2 * cb];
            double acc = 0.0;
            for (std::size_t j2 = 0; j2 < cb; ++j2) acc += u[j1 * cb + j2] * brow[j2];
            g.d_a.data[i1 * ca + j1] += acc;
        }
        for (std::size_t j2 = 0; j2 < cb; ++j2) {
            double acc = 0.0;
            for (std::size_t j1 = 0; j1 < ca; ++j1) acc += u[j1 * cb + j2] * emb.a.data[i1 * ca + j1];
            g.d_b.data[i2 * cb + j2] += acc;
        }
    }
    return g;
}

}  // namespace permkron
