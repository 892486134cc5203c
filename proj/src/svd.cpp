#include "permkron/svd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "permkron/rng.hpp"

namespace permkron {

namespace {

constexpr double kSigmaRelTol = 1e-12;
constexpr std::size_t kMaxPowerIters = 10000;
// A few iterations before the first convergence check; guards against a
// coincidentally stable sigma estimate far from the fixed point.
constexpr std::size_t kMinPowerIters = 10;

std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x) {
    std::vector<double> y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = &a.data[i * a.cols];
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> matvec_t(const DenseMatrix& a, const std::vector<double>& y) {
    std::vector<double> x(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = &a.data[i * a.cols];
        const double yi = y[i];
        if (yi == 0.0) continue;
        for (std::size_t j = 0; j < a.cols; ++j) x[j] += row[j] * yi;
    }
    return x;
}

double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

void scale(std::vector<double>& v, double s) {
    for (double& e : v) e *= s;
}

// Removes the components along the first `count` columns of basis.
void project_out(std::vector<double>& v, const DenseMatrix& basis, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) proj += v[i] * basis.data[i * basis.cols + k];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * basis.data[i * basis.cols + k];
    }
}

}  // namespace

Result<SvdResult> truncated_svd_power(const DenseMatrix& a, std::size_t rank, std::uint64_t seed) {
    const std::size_t max_rank = std::min(a.rows, a.cols);
    if (rank == 0 || rank > max_rank)
        return make_error(ErrorKind::validation,
                          "svd rank " + std::to_string(rank) + " out of range [1, " + std::to_string(max_rank) + "]");

    SvdResult res;
    res.singular_values.assign(rank, 0.0);
    res.u = DenseMatrix(a.rows, rank);
    res.v = DenseMatrix(a.cols, rank);

    Rng rng(seed);
    for (std::size_t k = 0; k < rank; ++k) {
        std::vector<double> v(a.cols);
        for (double& e : v) e = rng.normal();
        project_out(v, res.v, k);
        double vn = norm2(v);
        if (vn == 0.0) break;  // exhausted the column space
        scale(v, 1.0 / vn);

        double sigma_prev = -1.0;
        double sigma = 0.0;
        for (std::size_t it = 0; it < kMaxPowerIters; ++it) {
            std::vector<double> av = matvec(a, v);
            sigma = norm2(av);
            if (sigma == 0.0) break;  // v is in the null space; sigma_k = 0
            std::vector<double> w = matvec_t(a, av);
            project_out(w, res.v, k);
            const double wn = norm2(w);
            if (wn == 0.0) break;
            scale(w, 1.0 / wn);
            v = std::move(w);
            if (it + 1 >= kMinPowerIters && sigma_prev >= 0.0 &&
                std::abs(sigma - sigma_prev) < kSigmaRelTol * sigma)
                break;
            sigma_prev = sigma;
        }

        std::vector<double> av = matvec(a, v);
        sigma = norm2(av);
        if (sigma == 0.0) break;  // remaining singular values are zero
        res.singular_values[k] = sigma;
        for (std::size_t i = 0; i < a.rows; ++i) res.u.data[i * rank + k] = av[i] / sigma;
        for (std::size_t j = 0; j < a.cols; ++j) res.v.data[j * rank + k] = v[j];
    }
    return res;
}

SvdResult jacobi_svd(const DenseMatrix& a) {
    // One-sided Jacobi orthogonalizes the columns of A; run on A or A^T so the
    // working matrix is tall (fewer column pairs).
    const bool flip = a.rows < a.cols;
    DenseMatrix w = flip ? transpose(a) : a;
    const std::size_t q = w.cols;

    DenseMatrix v = identity_matrix(q);
    const double fro = frobenius_norm(w);
    const double off_tol = 1e-15 * (fro > 0.0 ? fro * fro : 1.0);

    for (std::size_t sweep = 0; sweep < 64; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            for (std::size_t j = i + 1; j < q; ++j) {
                double aii = 0.0, ajj = 0.0, aij = 0.0;
                for (std::size_t r = 0; r < w.rows; ++r) {
                    const double x = w.data[r * q + i];
                    const double y = w.data[r * q + j];
                    aii += x * x;
                    ajj += y * y;
                    aij += x * y;
                }
                if (std::abs(aij) <= off_tol || aij == 0.0) continue;
                if (std::abs(aij) <= 1e-15 * std::sqrt(aii * ajj)) continue;
                rotated = true;
                const double zeta = (ajj - aii) / (2.0 * aij);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < w.rows; ++r) {
                    const double x = w.data[r * q + i];
                    const double y = w.data[r * q + j];
                    w.data[r * q + i] = c * x - s * y;
                    w.data[r * q + j] = s * x + c * y;
                }
                for (std::size_t r = 0; r < q; ++r) {
                    const double x = v.data[r * q + i];
                    const double y = v.data[r * q + j];
                    v.data[r * q + i] = c * x - s * y;
                    v.data[r * q + j] = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }

    const std::size_t k = std::min(w.rows, q);
    std::vector<double> sig(q, 0.0);
    for (std::size_t j = 0; j < q; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < w.rows; ++r) s += w.data[r * q + j] * w.data[r * q + j];
        sig[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

    SvdResult res;
    res.singular_values.resize(k);
    DenseMatrix u(w.rows, k);
    DenseMatrix vv(q, k);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t src = order[c];
        const double s = sig[src];
        res.singular_values[c] = s;
        for (std::size_t r = 0; r < w.rows; ++r)
            u.data[r * k + c] = s > 0.0 ? w.data[r * q + src] / s : 0.0;
        for (std::size_t r = 0; r < q; ++r) vv.data[r * k + c] = v.data[r * q + src];
    }
    if (flip) {
        res.u = std::move(vv);
        res.v = std::move(u);
    } else {
        res.u = std::move(u);
        res.v = std::move(vv);
    }
    return res;
}

SymEigResult eigen_sym_jacobi(const DenseMatrix& a) {
    assert(a.rows == a.cols);
    const std::size_t n = a.rows;
    DenseMatrix m = a;
    DenseMatrix vecs = identity_matrix(n);
    const double fro = frobenius_norm(a);
    const double tol = 1e-14 * (fro > 0.0 ? fro : 1.0);

    for (std::size_t sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * m.at(i, j) * m.at(i, j);
        if (std::sqrt(off) <= tol) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (apq == 0.0) continue;
                const double app = m.at(p, p);
                const double aqq = m.at(q, q);
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < n; ++r) {
                    const double x = m.at(r, p);
                    const double y = m.at(r, q);
                    m.at(r, p) = c * x - s * y;
                    m.at(r, q) = s * x + c * y;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double x = m.at(p, r);
                    const double y = m.at(q, r);
                    m.at(p, r) = c * x - s * y;
                    m.at(q, r) = s * x + c * y;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double x = vecs.at(r, p);
                    const double y = vecs.at(r, q);
                    vecs.at(r, p) = c * x - s * y;
                    vecs.at(r, q) = s * x + c * y;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return std::abs(m.at(x, x)) > std::abs(m.at(y, y)); });

    SymEigResult res;
    res.eigenvalues.resize(n);
    res.vectors = DenseMatrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        res.eigenvalues[c] = m.at(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) res.vectors.at(r, c) = vecs.at(r, order[c]);
    }
    return res;
}

}  // namespace permkron
