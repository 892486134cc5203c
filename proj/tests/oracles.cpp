#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "permkron/rng.hpp"
#include "permkron/svd.hpp"

namespace permkron::oracle {

DenseMatrix kron_dense(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix k(a.rows * b.rows, a.cols * b.cols);
    for (std::size_t i1 = 0; i1 < a.rows; ++i1)
        for (std::size_t j1 = 0; j1 < a.cols; ++j1)
            for (std::size_t i2 = 0; i2 < b.rows; ++i2)
                for (std::size_t j2 = 0; j2 < b.cols; ++j2)
                    k.at(i1 * b.rows + i2, j1 * b.cols + j2) = a.at(i1, j1) * b.at(i2, j2);
    return k;
}

DenseMatrix rearrange_blocks(const DenseMatrix& w, std::size_t m1, std::size_t n1, std::size_t m2,
                             std::size_t n2) {
    DenseMatrix r(m1 * n1, m2 * n2);
    for (std::size_t i1 = 0; i1 < m1; ++i1)
        for (std::size_t j1 = 0; j1 < n1; ++j1) {
            // Block (i1, j1) of W, flattened row-major into one row of R.
            for (std::size_t i2 = 0; i2 < m2; ++i2)
                for (std::size_t j2 = 0; j2 < n2; ++j2)
                    r.at(i1 * n1 + j1, i2 * n2 + j2) = w.at(i1 * m2 + i2, j1 * n2 + j2);
        }
    return r;
}

BruteAssignment brute_force_assignment(const DenseMatrix& d) {
    const std::size_t n = d.rows;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    BruteAssignment best;
    best.objective = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) cost += d.at(i, perm[i]);
        if (cost < best.objective) {
            best.objective = cost;
            best.perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double svd_tail_residual(const DenseMatrix& r_mat, std::size_t rank) {
    const SvdResult svd = jacobi_svd(r_mat);
    double tail = 0.0;
    for (std::size_t i = rank; i < svd.singular_values.size(); ++i)
        tail += svd.singular_values[i] * svd.singular_values[i];
    return std::sqrt(tail);
}

double exhaustive_pkron_residual_4x4(const DenseMatrix& w) {
    std::vector<std::size_t> p{0, 1, 2, 3};
    double best = std::numeric_limits<double>::infinity();
    do {
        DenseMatrix pw(4, 4);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) pw.at(i, j) = w.at(p[i], j);
        std::vector<std::size_t> c{0, 1, 2, 3};
        do {
            DenseMatrix pwc(4, 4);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) pwc.at(i, j) = pw.at(i, c[j]);
            best = std::min(best, svd_tail_residual(rearrange_blocks(pwc, 2, 2, 2, 2), 1));
        } while (std::next_permutation(c.begin(), c.end()));
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

PlantedInstance make_planted(const KronShape& shape, std::size_t rank, std::uint64_t seed) {
    Rng rng(seed);
    DenseMatrix k(shape.rows(), shape.cols());
    for (std::size_t t = 0; t < rank; ++t) {
        const DenseMatrix a = random_matrix(shape.m1, shape.n1, rng);
        const DenseMatrix b = random_matrix(shape.m2, shape.n2, rng);
        const DenseMatrix term = kron_dense(a, b);
        for (std::size_t i = 0; i < k.data.size(); ++i) k.data[i] += term.data[i];
    }
    PlantedInstance inst;
    inst.row_shuffle = random_permutation(shape.rows(), rng);
    inst.col_shuffle = random_permutation(shape.cols(), rng);
    inst.w = DenseMatrix(shape.rows(), shape.cols());
    for (std::size_t i = 0; i < shape.rows(); ++i)
        for (std::size_t j = 0; j < shape.cols(); ++j)
            inst.w.at(inst.row_shuffle(i), inst.col_shuffle(j)) = k.at(i, j);
    return inst;
}

std::vector<double> fd_gradient(const std::function<double()>& eval, std::span<double> params, double eps) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double hi = eval();
        params[i] = saved - eps;
        const double lo = eval();
        params[i] = saved;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

double max_rel_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return worst;
}

double reference_cross_entropy(const DenseMatrix& logits, const std::vector<std::size_t>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
        total += (mx + std::log(sum)) - logits.at(i, labels[i]);
    }
    return logits.rows > 0 ? total / static_cast<double>(logits.rows) : 0.0;
}

}  // namespace permkron::oracle
