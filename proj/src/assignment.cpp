#include "permkron/assignment.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace permkron {

Result<DenseMatrix> build_cost_matrix(const DenseMatrix& w1, const DenseMatrix& w2, CostKind kind) {
    if (w1.rows != w2.rows || w1.cols != w2.cols)
        return make_error(ErrorKind::shape, "cost matrix inputs must share a shape");
    const std::size_t n = w1.rows;
    DenseMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r1 = &w1.data[i * w1.cols];
        for (std::size_t j = 0; j < n; ++j) {
            const double* r2 = &w2.data[j * w2.cols];
            double s = 0.0;
            if (kind == CostKind::squared_l2) {
                for (std::size_t k = 0; k < w1.cols; ++k) {
                    const double diff = r1[k] - r2[k];
                    s += diff * diff;
                }
            } else {
                for (std::size_t k = 0; k < w1.cols; ++k) s += std::abs(r1[k] - r2[k]);
            }
            d.data[i * n + j] = s;
        }
    }
    return d;
}

Result<AssignmentResult> hungarian(const DenseMatrix& d) {
    if (d.rows != d.cols) return make_error(ErrorKind::validation, "cost matrix must be square");
    if (!all_finite(d)) return make_error(ErrorKind::validation, "cost matrix has non-finite entries");
    const std::size_t n = d.rows;
    if (n == 0) return AssignmentResult{PermutationVec{}, 0.0};

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based with a virtual column 0, the classic potentials formulation.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> col_to_row(n + 1, 0);  // 0 = unassigned
    std::vector<std::size_t> way(n + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        col_to_row[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = col_to_row[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = d.data[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (col_to_row[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentResult res;
    res.perm.map.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) res.perm.map[col_to_row[j] - 1] = j - 1;
    // Summing the selected entries is exact; potentials carry rounding.
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += d.data[i * n + res.perm.map[i]];
    res.objective = obj;
    return res;
}

Result<RowPermutationResult> solve_row_permutation(const DenseMatrix& w1, const DenseMatrix& w2, CostKind kind) {
    auto d = build_cost_matrix(w1, w2, kind);
    if (!d) return d.error();
    auto assign = hungarian(d.value());
    if (!assign) return assign.error();
    // hungarian pairs row i of w1 with row phi(i) of w2; the permutation that
    // places w1's rows against w2 row-for-row is the inverse map.
    RowPermutationResult res;
    res.perm = assign.value().perm.inverse();
    res.objective = assign.value().objective;
    return res;
}

Result<double> trace_objective(const PermutationVec& perm, const DenseMatrix& w1, const DenseMatrix& w2) {
    if (w1.rows != w2.rows || w1.cols != w2.cols)
        return make_error(ErrorKind::shape, "trace objective inputs must share a shape");
    if (perm.size() != w1.rows)
        return make_error(ErrorKind::shape, "permutation length does not match row count");
    // K = -2*w1*w2^T evaluated only on the permuted diagonal.
    double tr = 0.0;
    for (std::size_t i = 0; i < w1.rows; ++i) {
        const double* a = &w1.data[perm(i) * w1.cols];
        const double* b = &w2.data[i * w2.cols];
        double s = 0.0;
        for (std::size_t k = 0; k < w1.cols; ++k) s += a[k] * b[k];
        tr += -2.0 * s;
    }
    return tr;
}

}  // namespace permkron
