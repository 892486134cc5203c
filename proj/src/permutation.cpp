#include "permkron/permutation.hpp"

#include <cassert>
#include <numeric>

namespace permkron {

PermutationVec PermutationVec::identity(std::size_t n) {
    std::vector<std::size_t> m(n);
    std::iota(m.begin(), m.end(), std::size_t{0});
    return PermutationVec(std::move(m));
}

PermutationVec PermutationVec::inverse() const {
    std::vector<std::size_t> inv(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) inv[map[i]] = i;
    return PermutationVec(std::move(inv));
}

PermutationVec PermutationVec::compose(const PermutationVec& other) const {
    assert(map.size() == other.map.size());
    std::vector<std::size_t> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[other.map[i]];
    return PermutationVec(std::move(out));
}

bool PermutationVec::is_identity() const {
    for (std::size_t i = 0; i < map.size(); ++i)
        if (map[i] != i) return false;
    return true;
}

bool is_permutation(const PermutationVec& p) {
    std::vector<bool> seen(p.map.size(), false);
    for (std::size_t v : p.map) {
        if (v >= p.map.size() || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

PermutationVec random_permutation(std::size_t n, Rng& rng) {
    PermutationVec p = PermutationVec::identity(n);
    // Fisher-Yates.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(p.map[i - 1], p.map[j]);
    }
    return p;
}

DenseMatrix permute_rows(const DenseMatrix& w, const PermutationVec& p) {
    assert(p.size() == w.rows);
    DenseMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* src = &w.data[p(i) * w.cols];
        double* dst = &out.data[i * w.cols];
        for (std::size_t j = 0; j < w.cols; ++j) dst[j] = src[j];
    }
    return out;
}

DenseMatrix permute_cols(const DenseMatrix& w, const PermutationVec& c) {
    assert(c.size() == w.cols);
    DenseMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* src = &w.data[i * w.cols];
        double* dst = &out.data[i * w.cols];
        for (std::size_t j = 0; j < w.cols; ++j) dst[j] = src[c(j)];
    }
    return out;
}

DenseMatrix permute_rows_cols(const DenseMatrix& w, const PermutationVec& p, const PermutationVec& c) {
    assert(p.size() == w.rows && c.size() == w.cols);
    DenseMatrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* src = &w.data[p(i) * w.cols];
        double* dst = &out.data[i * w.cols];
        for (std::size_t j = 0; j < w.cols; ++j) dst[j] = src[c(j)];
    }
    return out;
}

DenseMatrix permutation_to_matrix(const PermutationVec& p) {
    DenseMatrix out(p.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out.at(i, p(i)) = 1.0;
    return out;
}

}  // namespace permkron
