#include "permkron/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "permkron/rng.hpp"
#include "permkron/svd.hpp"

namespace permkron {

namespace {

struct Iterate {
    double obj = 0.0;
    PermutationVec p, c;
    KronSum factors;
};

struct TrajectoryOutcome {
    Iterate best;
    OptimizerTrace trace;
};

double eval_objective(const DenseMatrix& w, const PermutationVec& p, const PermutationVec& c,
                      const DenseMatrix& recon) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* src = &w.data[p(i) * w.cols];
        const double* rec = &recon.data[i * recon.cols];
        for (std::size_t j = 0; j < w.cols; ++j) {
            const double diff = src[c(j)] - rec[j];
            s += diff * diff;
        }
    }
    return std::sqrt(s);
}

// One full alternating descent from (p0, c0). All recorded objectives come
// from eval_objective so comparisons are apples-to-apples; a step's candidate
// is adopted only when it does not increase that value, which makes the trace
// non-increasing by construction (each step is an exact conditional minimizer,
// so rejections only ever trim floating-point noise).
Result<TrajectoryOutcome> run_trajectory(const DenseMatrix& w, const DecomposeOptions& opts,
                                         PermutationVec p, PermutationVec c, std::uint64_t traj_seed) {
    TrajectoryOutcome out;
    std::optional<double> prev_final;
    double current = 0.0;
    bool have_factors = false;
    KronSum factors;
    DenseMatrix recon;

    for (std::size_t it = 0; it < opts.max_alt_iters; ++it) {
        const DenseMatrix pwc = permute_rows_cols(w, p, c);
        auto nk = nearest_kron(pwc, opts.shape, opts.rank, Rng::mix(traj_seed, it));
        if (!nk) return nk.error();
        const DenseMatrix cand_recon = kron_reconstruct(nk.value().sum);
        const double cand_obj = eval_objective(w, p, c, cand_recon);
        if (!have_factors || cand_obj <= current) {
            factors = std::move(nk.value().sum);
            recon = cand_recon;
            current = cand_obj;
            have_factors = true;
        }
        const double after_svd = current;

        double after_p = current;
        double after_c = current;
        if (opts.use_permutations) {
            const DenseMatrix wc = permute_cols(w, c);
            auto rp = solve_row_permutation(wc, recon, opts.cost);
            if (!rp) return rp.error();
            const double cand = eval_objective(w, rp.value().perm, c, recon);
            if (cand <= current) {
                p = std::move(rp.value().perm);
                current = cand;
            }
            after_p = current;

            const DenseMatrix pw = permute_rows(w, p);
            auto rc = solve_row_permutation(transpose(pw), transpose(recon), opts.cost);
            if (!rc) return rc.error();
            const double cand2 = eval_objective(w, p, rc.value().perm, recon);
            if (cand2 <= current) {
                c = std::move(rc.value().perm);
                current = cand2;
            }
            after_c = current;
        }

        out.trace.records.push_back({it, after_svd, after_p, after_c});
        if (out.trace.records.size() == 1 || current < out.best.obj) {
            out.best = Iterate{current, p, c, factors};
        }

        if (!opts.use_permutations) break;  // further iterations would repeat the same SVD
        if (prev_final) {
            const double improvement = *prev_final - current;
            if (*prev_final == 0.0 || improvement < opts.rel_improvement_stop * (*prev_final)) break;
        }
        prev_final = current;
    }
    return out;
}

struct RatioGrouping {
    std::vector<std::size_t> group_of;  // index -> group id, ids ordered by ratio
};

std::optional<RatioGrouping> ratio_groups(const DenseMatrix& vecs, std::size_t col, std::size_t base_col,
                                          std::size_t expect_groups, std::size_t expect_size) {
    const std::size_t n = vecs.rows;
    double base_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) base_max = std::max(base_max, std::abs(vecs.at(i, base_col)));
    if (base_max == 0.0) return std::nullopt;
    std::vector<double> ratio(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = vecs.at(i, base_col);
        // A denominator near zero makes every ratio unreliable.
        if (std::abs(denom) < 1e-9 * base_max) return std::nullopt;
        ratio[i] = vecs.at(i, col) / denom;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ratio[a] < ratio[b]; });

    RatioGrouping grouping;
    grouping.group_of.assign(n, 0);
    std::size_t gid = 0;
    std::vector<std::size_t> sizes{1};
    grouping.group_of[order[0]] = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const double gap = ratio[order[k]] - ratio[order[k - 1]];
        if (gap > 1e-6 * std::max(1.0, std::abs(ratio[order[k]]))) {
            ++gid;
            sizes.push_back(0);
        }
        grouping.group_of[order[k]] = gid;
        ++sizes[gid];
    }
    if (gid + 1 != expect_groups) return std::nullopt;
    for (std::size_t s : sizes)
        if (s != expect_size) return std::nullopt;
    return grouping;
}

}  // namespace

std::vector<PermutationVec> spectral_grid_candidates(const DenseMatrix& gram, std::size_t d1, std::size_t d2,
                                                     std::size_t max_candidates) {
    const std::size_t n = d1 * d2;
    if (gram.rows != n || gram.cols != n) return {};
    if (d1 == 1 || d2 == 1) return {PermutationVec::identity(n)};

    const SymEigResult eig = eigen_sym_jacobi(gram);
    std::vector<RatioGrouping> list_a, list_b;
    auto push_unique = [](std::vector<RatioGrouping>& list, const RatioGrouping& g) {
        for (const RatioGrouping& have : list)
            if (have.group_of == g.group_of) return;
        list.push_back(g);
    };
    const std::size_t scan = std::min<std::size_t>(n, 10);
    for (std::size_t k = 1; k < scan; ++k) {
        if (auto ga = ratio_groups(eig.vectors, k, 0, d1, d2)) push_unique(list_a, *ga);
        if (d1 != d2) {
            if (auto gb = ratio_groups(eig.vectors, k, 0, d2, d1)) push_unique(list_b, *gb);
        }
    }
    // Equal factor sizes make row- and column-block groupings indistinguishable
    // by size signature; try every pairing of the found groupings.
    if (d1 == d2) list_b = list_a;

    std::vector<PermutationVec> candidates;
    std::vector<std::size_t> seen(d1 * d2);
    for (const RatioGrouping& ga : list_a) {
        for (const RatioGrouping& gb : list_b) {
            std::fill(seen.begin(), seen.end(), 0);
            bool complete = true;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t cell = ga.group_of[i] * d2 + gb.group_of[i];
                if (++seen[cell] > 1) {
                    complete = false;
                    break;
                }
            }
            if (!complete) continue;
            PermutationVec p;
            p.map.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) p.map[ga.group_of[i] * d2 + gb.group_of[i]] = i;
            bool dup = false;
            for (const PermutationVec& have : candidates)
                if (have.map == p.map) {
                    dup = true;
                    break;
                }
            if (!dup) candidates.push_back(std::move(p));
            if (candidates.size() >= max_candidates) return candidates;
        }
    }
    return candidates;
}

DecomposeOptions options_from_plan(const KronShape& shape, std::size_t rank, bool use_permutations,
                                   std::size_t max_alt_iters) {
    DecomposeOptions opts;
    opts.shape = shape;
    opts.rank = rank;
    opts.use_permutations = use_permutations;
    opts.max_alt_iters = max_alt_iters;
    return opts;
}

Result<DecomposeResult> decompose(const DenseMatrix& w, const DecomposeOptions& opts, std::uint64_t seed) {
    const KronShape& s = opts.shape;
    if (w.rows != s.rows() || w.cols != s.cols())
        return make_error(ErrorKind::shape, "matrix is " + std::to_string(w.rows) + "x" + std::to_string(w.cols) +
                                                " but split expects " + std::to_string(s.rows()) + "x" +
                                                std::to_string(s.cols()));
    if (opts.rank == 0 || opts.rank > s.max_rank())
        return make_error(ErrorKind::validation, "rank " + std::to_string(opts.rank) + " out of range [1, " +
                                                     std::to_string(s.max_rank()) + "]");
    if (opts.max_alt_iters == 0) return make_error(ErrorKind::validation, "iteration budget must be >= 1");
    if (!all_finite(w)) return make_error(ErrorKind::numerical, "non-finite input matrix");

    const std::size_t m = w.rows;
    const std::size_t n = w.cols;

    // Start list: identity first (its first SVD step is exactly the
    // permutation-free solution, so the returned best can never be worse than
    // vanilla), then spectral grid candidates, then seeded random restarts.
    std::vector<std::pair<PermutationVec, PermutationVec>> starts;
    starts.emplace_back(PermutationVec::identity(m), PermutationVec::identity(n));
    if (opts.use_permutations) {
        if (opts.spectral_init && m <= opts.spectral_max_dim && n <= opts.spectral_max_dim) {
            const std::vector<PermutationVec> rows =
                spectral_grid_candidates(matmul_bt(w, w), s.m1, s.m2);
            const DenseMatrix wt = transpose(w);
            const std::vector<PermutationVec> cols =
                spectral_grid_candidates(matmul_bt(wt, wt), s.n1, s.n2);
            for (const PermutationVec& pr : rows)
                for (const PermutationVec& pc : cols) starts.emplace_back(pr, pc);
        }
        for (std::size_t r = 1; r < opts.restarts; ++r) {
            Rng rng(Rng::mix(seed, 0x5eed0000 + r));
            starts.emplace_back(random_permutation(m, rng), random_permutation(n, rng));
        }
    }

    // Exact optima reached from different starts differ only by fp noise;
    // a later trajectory must beat the incumbent by more than that noise or
    // the earlier one (identity-initialized first) is kept.
    const double tie = 1e-12 * frobenius_norm(w);
    std::optional<TrajectoryOutcome> winner;
    for (std::size_t t = 0; t < starts.size(); ++t) {
        auto outcome =
            run_trajectory(w, opts, starts[t].first, starts[t].second, Rng::mix(seed, t));
        if (!outcome) return outcome.error();
        if (!winner || outcome.value().best.obj + tie < winner->best.obj)
            winner = std::move(outcome.value());
        if (!opts.use_permutations) break;  // identical trajectories; one is enough
    }

    DecomposeResult res;
    res.decomposition.p = std::move(winner->best.p);
    res.decomposition.c = std::move(winner->best.c);
    res.decomposition.factors = std::move(winner->best.factors);
    res.decomposition.m = m;
    res.decomposition.n = n;
    res.decomposition.use_permutations = opts.use_permutations;
    res.decomposition.residual = winner->best.obj;
    res.trace = std::move(winner->trace);
    return res;
}

Result<double> objective(const DenseMatrix& w, const PermutedKronDecomposition& d) {
    const KronShape& s = d.factors.shape;
    if (w.rows != d.m || w.cols != d.n || s.rows() != d.m || s.cols() != d.n)
        return make_error(ErrorKind::shape, "decomposition does not match matrix shape");
    if (d.p.size() != d.m || d.c.size() != d.n)
        return make_error(ErrorKind::shape, "permutation lengths do not match matrix shape");

    // Blockwise: reconstruct one m2 x n2 block at a time.
    double sum = 0.0;
    std::vector<double> block(s.m2 * s.n2);
    for (std::size_t i1 = 0; i1 < s.m1; ++i1) {
        for (std::size_t j1 = 0; j1 < s.n1; ++j1) {
            std::fill(block.begin(), block.end(), 0.0);
            for (const KronFactorPair& term : d.factors.terms) {
                const double a = term.a.data[i1 * s.n1 + j1];
                if (a == 0.0) continue;
                for (std::size_t k = 0; k < block.size(); ++k) block[k] += a * term.b.data[k];
            }
            for (std::size_t i2 = 0; i2 < s.m2; ++i2) {
                const double* wrow = &w.data[d.p(i1 * s.m2 + i2) * w.cols];
                for (std::size_t j2 = 0; j2 < s.n2; ++j2) {
                    const double diff = wrow[d.c(j1 * s.n2 + j2)] - block[i2 * s.n2 + j2];
                    sum += diff * diff;
                }
            }
        }
    }
    return std::sqrt(sum);
}

std::uint64_t parameter_count(const PermutedKronDecomposition& d) {
    const KronShape& s = d.factors.shape;
    const std::uint64_t factor_params =
        static_cast<std::uint64_t>(d.factors.terms.size()) *
        (static_cast<std::uint64_t>(s.m1) * s.n1 + static_cast<std::uint64_t>(s.m2) * s.n2);
    if (!d.use_permutations) return factor_params;
    return factor_params + d.m + d.n;
}

}  // namespace permkron
