#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "permkron/assignment.hpp"
#include "permkron/rng.hpp"

using namespace permkron;

namespace {

double perm_frobenius_sq(const PermutationVec& p, const DenseMatrix& w1, const DenseMatrix& w2) {
    // ||P*w1 - w2||_F^2 with (P*w1)[i] = w1[p(i)], recomputed entrywise.
    double s = 0.0;
    for (std::size_t i = 0; i < w1.rows; ++i)
        for (std::size_t j = 0; j < w1.cols; ++j) {
            const double d = w1.at(p(i), j) - w2.at(i, j);
            s += d * d;
        }
    return s;
}

}  // namespace

TEST_CASE("cost matrix of identical inputs has a zero diagonal") {
    Rng rng(1);
    const DenseMatrix w = random_matrix(5, 3, rng);
    auto d = build_cost_matrix(w, w);
    REQUIRE(d.ok());
    for (std::size_t i = 0; i < 5; ++i) CHECK(d.value().at(i, i) == 0.0);
}

TEST_CASE("scalar cost is the squared difference") {
    auto d = build_cost_matrix(DenseMatrix(1, 1, {0.0}), DenseMatrix(1, 1, {3.0}));
    REQUIRE(d.ok());
    CHECK(d.value().at(0, 0) == 9.0);
}

TEST_CASE("cost matrix matches the brute-force double loop") {
    Rng rng(2);
    const DenseMatrix w1 = random_matrix(5, 7, rng);
    const DenseMatrix w2 = random_matrix(5, 7, rng);
    auto d = build_cost_matrix(w1, w2);
    REQUIRE(d.ok());
    auto d1 = build_cost_matrix(w1, w2, CostKind::l1);
    REQUIRE(d1.ok());
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double sq = 0.0, l1 = 0.0;
            for (std::size_t k = 0; k < 7; ++k) {
                const double diff = w1.at(i, k) - w2.at(j, k);
                sq += diff * diff;
                l1 += std::abs(diff);
            }
            CHECK(std::abs(d.value().at(i, j) - sq) <= 1e-12 * std::max(1.0, sq));
            CHECK(std::abs(d1.value().at(i, j) - l1) <= 1e-12 * std::max(1.0, l1));
        }
}

TEST_CASE("cost matrix shape mismatch is a shape error") {
    auto d = build_cost_matrix(DenseMatrix(2, 3), DenseMatrix(2, 4));
    REQUIRE(!d.ok());
    CHECK(d.error().kind == ErrorKind::shape);
}

TEST_CASE("uniform off-diagonal cost forces the identity") {
    DenseMatrix d(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) d.at(i, j) = i == j ? 0.0 : 1.0;
    auto r = hungarian(d);
    REQUIRE(r.ok());
    CHECK(r.value().perm.is_identity());
    CHECK(r.value().objective == 0.0);
}

TEST_CASE("2x2 enumeration example") {
    auto r = hungarian(DenseMatrix(2, 2, {4, 1, 2, 3}));
    REQUIRE(r.ok());
    CHECK(r.value().perm.map == std::vector<std::size_t>{1, 0});
    CHECK(r.value().objective == 3.0);
}

TEST_CASE("hungarian equals the exhaustive oracle for 200 random costs per size") {
    Rng rng(3);
    for (std::size_t n = 2; n <= 6; ++n) {
        for (int trial = 0; trial < 200; ++trial) {
            DenseMatrix d(n, n);
            for (double& v : d.data) v = rng.uniform() * 10.0 - 2.0;
            auto got = hungarian(d);
            REQUIRE(got.ok());
            const auto want = oracle::brute_force_assignment(d);
            CHECK(got.value().objective == doctest::Approx(want.objective).epsilon(1e-12));
            CHECK(is_permutation(got.value().perm));
        }
    }
}

TEST_CASE("hungarian is deterministic under ties") {
    DenseMatrix d(3, 3);  // all-equal costs: every permutation optimal
    for (double& v : d.data) v = 2.5;
    auto r1 = hungarian(d);
    auto r2 = hungarian(d);
    REQUIRE(r1.ok());
    REQUIRE(r2.ok());
    CHECK(r1.value().perm.map == r2.value().perm.map);
    CHECK(r1.value().perm.is_identity());
}

TEST_CASE("hungarian rejects non-square and non-finite costs") {
    CHECK(!hungarian(DenseMatrix(2, 3)).ok());
    DenseMatrix d(2, 2);
    d.at(0, 1) = std::numeric_limits<double>::infinity();
    CHECK(!hungarian(d).ok());
}

TEST_CASE("solve_row_permutation recovers a planted shuffle exactly") {
    Rng rng(4);
    const DenseMatrix w2 = random_matrix(6, 4, rng);
    const PermutationVec p = random_permutation(6, rng);
    // w1 such that (P*w1) == w2 for the planted p: w1[p(i)] = w2[i].
    DenseMatrix w1(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) w1.at(p(i), j) = w2.at(i, j);
    auto r = solve_row_permutation(w1, w2);
    REQUIRE(r.ok());
    CHECK(r.value().perm.map == p.map);
    CHECK(r.value().objective <= 1e-20);
}

TEST_CASE("identical inputs with distinct rows give the identity") {
    Rng rng(5);
    const DenseMatrix w = random_matrix(5, 3, rng);
    auto r = solve_row_permutation(w, w);
    REQUIRE(r.ok());
    CHECK(r.value().perm.is_identity());
    CHECK(r.value().objective == 0.0);
}

TEST_CASE("solve_row_permutation objective equals exhaustive search over all 720 permutations") {
    Rng rng(6);
    const DenseMatrix w1 = random_matrix(6, 4, rng);
    const DenseMatrix w2 = random_matrix(6, 4, rng);
    auto got = solve_row_permutation(w1, w2);
    REQUIRE(got.ok());

    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    double best = std::numeric_limits<double>::infinity();
    do {
        best = std::min(best, perm_frobenius_sq(PermutationVec{perm}, w1, w2));
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got.value().objective == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("trace objective identity at the identity permutation") {
    const DenseMatrix eye = identity_matrix(2);
    auto t = trace_objective(PermutationVec::identity(2), eye, eye);
    REQUIRE(t.ok());
    CHECK(t.value() == -4.0);
    // ||I - I||^2 = tr + ||W1||^2 + ||W2||^2 = -4 + 2 + 2 = 0.
    CHECK(t.value() + frobenius_norm_sq(eye) + frobenius_norm_sq(eye) == 0.0);
}

TEST_CASE("trace identity holds for random pairs and permutations") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const DenseMatrix w1 = random_matrix(6, 5, rng);
        const DenseMatrix w2 = random_matrix(6, 5, rng);
        const PermutationVec p = random_permutation(6, rng);
        auto t = trace_objective(p, w1, w2);
        REQUIRE(t.ok());
        const double lhs = perm_frobenius_sq(p, w1, w2);
        const double rhs = frobenius_norm_sq(w1) + frobenius_norm_sq(w2) + t.value();
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("the assignment optimum beats 100 random challenger permutations") {
    Rng rng(8);
    const DenseMatrix w1 = random_matrix(8, 6, rng);
    const DenseMatrix w2 = random_matrix(8, 6, rng);
    auto best = solve_row_permutation(w1, w2);
    REQUIRE(best.ok());
    auto best_trace = trace_objective(best.value().perm, w1, w2);
    REQUIRE(best_trace.ok());
    for (int i = 0; i < 100; ++i) {
        const PermutationVec challenger = random_permutation(8, rng);
        auto t = trace_objective(challenger, w1, w2);
        REQUIRE(t.ok());
        CHECK(best_trace.value() <= t.value() + 1e-12);
    }
}

TEST_CASE("appendix identity: both argmin routes agree on the achieved objective") {
    Rng rng(9);
    for (int i = 0; i < 30; ++i) {
        const DenseMatrix w1 = random_matrix(7, 4, rng);
        const DenseMatrix w2 = random_matrix(7, 4, rng);
        auto direct = solve_row_permutation(w1, w2);
        REQUIRE(direct.ok());
        // Trace route: minimize tr(P*K) over the assignment built from K.
        auto t = trace_objective(direct.value().perm, w1, w2);
        REQUIRE(t.ok());
        const double via_trace = frobenius_norm_sq(w1) + frobenius_norm_sq(w2) + t.value();
        CHECK(std::abs(direct.value().objective - via_trace) <=
              1e-10 * std::max(1.0, std::abs(via_trace)));
    }
}
