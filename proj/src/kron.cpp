#include "permkron/kron.hpp"

#include <cmath>
#include <string>

#include "permkron/svd.hpp"

namespace permkron {

namespace {

Result<void> check_shape(const DenseMatrix& w, const KronShape& s) {
    if (w.rows != s.rows() || w.cols != s.cols())
        return make_error(ErrorKind::shape, "matrix is " + std::to_string(w.rows) + "x" + std::to_string(w.cols) +
                                                " but split expects " + std::to_string(s.rows()) + "x" +
                                                std::to_string(s.cols()));
    return {};
}

}  // namespace

std::uint64_t kron_matvec_flops(const KronShape& s, std::size_t rank) {
    const std::uint64_t macs_per_term =
        static_cast<std::uint64_t>(s.m2) * s.n2 * s.n1 + static_cast<std::uint64_t>(s.m1) * s.n1 * s.m2;
    return 2 * rank * macs_per_term;
}

std::uint64_t dense_matvec_flops(std::size_t m, std::size_t n) {
    return 2 * static_cast<std::uint64_t>(m) * n;
}

Result<DenseMatrix> rearrange(const DenseMatrix& w, const KronShape& s) {
    if (auto r = check_shape(w, s); !r) return r.error();
    DenseMatrix out(s.m1 * s.n1, s.m2 * s.n2);
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
        for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
            double* dst = &out.data[(i1 * s.n1 + j1) * out.cols];
            for (std::size_t i2 = 0; i2 < s.m2; ++i2)
                for (std::size_t j2 = 0; j2 < s.n2; ++j2)
                    dst[i2 * s.n2 + j2] = w.data[(i1 * s.m2 + i2) * w.cols + (j1 * s.n2 + j2)];
        }
    }
    return out;
}

Result<DenseMatrix> rearrange_inverse(const DenseMatrix& r, const KronShape& s) {
    if (r.rows != s.m1 * s.n1 || r.cols != s.m2 * s.n2)
        return make_error(ErrorKind::shape, "rearranged matrix has wrong shape for split");
    DenseMatrix out(s.rows(), s.cols());
    for (std::size_t i1 = 0; i1 < s.m1; ++i1)
        for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
            const double* src = &r.data[(i1 * s.n1 + j1) * r.cols];
            for (std::size_t i2 = 0; i2 < s.m2; ++i2)
                for (std::size_t j2 = 0; j2 < s.n2; ++j2)
                    out.data[(i1 * s.m2 + i2) * out.cols + (j1 * s.n2 + j2)] = src[i2 * s.n2 + j2];
        }
    return out;
}

Result<NearestKronResult> nearest_kron(const DenseMatrix& w, const KronShape& s, std::size_t rank,
                                       std::uint64_t seed) {
    if (auto r = check_shape(w, s); !r) return r.error();
    if (rank == 0 || rank > s.max_rank())
        return make_error(ErrorKind::validation, "rank " + std::to_string(rank) +
                                                     " out of range [1, " + std::to_string(s.max_rank()) + "]");
    if (!all_finite(w)) return make_error(ErrorKind::numerical, "non-finite input matrix");

    auto rearranged = rearrange(w, s);
    if (!rearranged) return rearranged.error();
    DenseMatrix& r = rearranged.value();

    NearestKronResult out;
    out.sum.shape = s;
    out.sum.terms.assign(rank, KronFactorPair{DenseMatrix(s.m1, s.n1), DenseMatrix(s.m2, s.n2)});

    if (frobenius_norm_sq(r) == 0.0) {
        out.residual = 0.0;
        out.effective_rank = 0;
        return out;
    }

    auto svd = truncated_svd_power(r, rank, seed);
    if (!svd) return svd.error();
    const SvdResult& sv = svd.value();

    const double sigma0 = sv.singular_values.empty() ? 0.0 : sv.singular_values[0];
    for (std::size_t k = 0; k < rank; ++k) {
        const double sigma = sv.singular_values[k];
        // Trailing near-zero directions carry only noise; leave them zero.
        if (sigma < 1e-14 * sigma0 || sigma == 0.0) break;

        std::vector<double> u(r.rows), v(r.cols);
        for (std::size_t i = 0; i < r.rows; ++i) u[i] = sv.u.data[i * sv.u.cols + k];
        for (std::size_t j = 0; j < r.cols; ++j) v[j] = sv.v.data[j * sv.v.cols + k];

        // Sign convention: first nonzero entry of vec(A_k) non-negative.
        double umax = 0.0;
        for (double e : u) umax = std::max(umax, std::abs(e));
        for (double e : u) {
            if (std::abs(e) > 1e-12 * umax) {
                if (e < 0.0) {
                    for (double& ui : u) ui = -ui;
                    for (double& vi : v) vi = -vi;
                }
                break;
            }
        }

        const double root = std::sqrt(sigma);
        KronFactorPair& term = out.sum.terms[k];
        for (std::size_t i = 0; i < u.size(); ++i) term.a.data[i] = root * u[i];
        for (std::size_t j = 0; j < v.size(); ++j) term.b.data[j] = root * v[j];
        out.effective_rank = k + 1;
    }

    // Residual straight from the returned factors: ||R - sum vec(A)vec(B)^T||.
    DenseMatrix rem = r;
    for (std::size_t k = 0; k < out.effective_rank; ++k) {
        const KronFactorPair& term = out.sum.terms[k];
        for (std::size_t i = 0; i < rem.rows; ++i) {
            const double ai = term.a.data[i];
            if (ai == 0.0) continue;
            double* row = &rem.data[i * rem.cols];
            for (std::size_t j = 0; j < rem.cols; ++j) row[j] -= ai * term.b.data[j];
        }
    }
    out.residual = frobenius_norm(rem);
    return out;
}

DenseMatrix kron_reconstruct(const KronSum& ks) {
    const KronShape& s = ks.shape;
    DenseMatrix out(s.rows(), s.cols());
    for (const KronFactorPair& term : ks.terms) {
        for (std::size_t i1 = 0; i1 < s.m1; ++i1)
            for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
                const double a = term.a.data[i1 * s.n1 + j1];
                if (a == 0.0) continue;
                for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
                    double* dst = &out.data[(i1 * s.m2 + i2) * out.cols + j1 * s.n2];
                    const double* brow = &term.b.data[i2 * s.n2];
                    for (std::size_t j2 = 0; j2 < s.n2; ++j2) dst[j2] += a * brow[j2];
                }
            }
    }
    return out;
}

Result<std::vector<double>> kron_matvec(const KronSum& ks, const std::vector<double>& x, FlopCounter* fc) {
    const KronShape& s = ks.shape;
    if (x.size() != s.cols())
        return make_error(ErrorKind::shape, "input length " + std::to_string(x.size()) + " != " +
                                                std::to_string(s.cols()));
    std::vector<double> y(s.rows(), 0.0);
    DenseMatrix xm(s.n1, s.n2);
    xm.data = x;
    for (const KronFactorPair& term : ks.terms) {
        // T = X * B^T (n1 x m2), then A * T (m1 x m2), accumulated into y.
        DenseMatrix t = matmul_bt(xm, term.b);
        if (fc) fc->count_macs(static_cast<std::uint64_t>(s.n1) * s.n2 * s.m2);
        for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
            const double* arow = &term.a.data[i1 * s.n1];
            for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
                double sum = 0.0;
                for (std::size_t j1 = 0; j1 < s.n1; ++j1) sum += arow[j1] * t.data[j1 * s.m2 + i2];
                y[i1 * s.m2 + i2] += sum;
            }
        }
        if (fc) fc->count_macs(static_cast<std::uint64_t>(s.m1) * s.n1 * s.m2);
    }
    return y;
}

Result<DenseMatrix> kron_matmat(const KronSum& ks, const DenseMatrix& x, FlopCounter* fc) {
    const KronShape& s = ks.shape;
    if (x.rows != s.cols())
        return make_error(ErrorKind::shape, "input has " + std::to_string(x.rows) + " rows, expected " +
                                                std::to_string(s.cols()));
    DenseMatrix out(s.rows(), x.cols);
    std::vector<double> col(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t i = 0; i < x.rows; ++i) col[i] = x.data[i * x.cols + j];
        auto y = kron_matvec(ks, col, fc);
        if (!y) return y.error();
        for (std::size_t i = 0; i < out.rows; ++i) out.data[i * out.cols + j] = y.value()[i];
    }
    return out;
}

Result<std::vector<double>> kron_matvec_t(const KronSum& ks, const std::vector<double>& g, FlopCounter* fc) {
    const KronShape& s = ks.shape;
    if (g.size() != s.rows())
        return make_error(ErrorKind::shape, "input length " + std::to_string(g.size()) + " != " +
                                                std::to_string(s.rows()));
    std::vector<double> x(s.cols(), 0.0);
    DenseMatrix gm(s.m1, s.m2);
    gm.data = g;
    for (const KronFactorPair& term : ks.terms) {
        // vec(A^T * G * B): first S = A^T G (n1 x m2), then S * B (n1 x n2).
        DenseMatrix sm(s.n1, s.m2);
        for (std::size_t j1 = 0; j1 < s.n1; ++j1)
            for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
                double sum = 0.0;
                for (std::size_t i1 = 0; i1 < s.m1; ++i1)
                    sum += term.a.data[i1 * s.n1 + j1] * gm.data[i1 * s.m2 + i2];
                sm.data[j1 * s.m2 + i2] = sum;
            }
        if (fc) fc->count_macs(static_cast<std::uint64_t>(s.m1) * s.n1 * s.m2);
        for (std::size_t j1 = 0; j1 < s.n1; ++j1)
            for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
                double sum = 0.0;
                for (std::size_t i2 = 0; i2 < s.m2; ++i2)
                    sum += sm.data[j1 * s.m2 + i2] * term.b.data[i2 * s.n2 + j2];
                x[j1 * s.n2 + j2] += sum;
            }
        if (fc) fc->count_macs(static_cast<std::uint64_t>(s.n1) * s.m2 * s.n2);
    }
    return x;
}

}  // namespace permkron
