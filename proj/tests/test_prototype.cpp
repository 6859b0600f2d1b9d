#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ingra/error.hpp"
#include "ingra/prototype.hpp"
#include "ingra/rng.hpp"
#include "oracles.hpp"

using namespace ingra;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

} // namespace

TEST_CASE("similarity is cosine after projection, clamped to [1e-8, 1]") {
    Matrix p(3, 2);
    p << 0.6, 0.4, // same direction as q
        1.0, 1.0,  // diagonal
        -1.0, -2.0; // fully negative: projects to zero
    const Vector q = vec({0.6, 0.4});
    const Vector d = prototype_similarity(p, q);

    CHECK(d(0) == doctest::Approx(1.0).epsilon(1e-12));
    // hand value: (0.6+0.4)/(sqrt(0.52)*sqrt(2)) = 1/sqrt(1.04)
    CHECK(d(1) == doctest::Approx(1.0 / std::sqrt(1.04)).epsilon(1e-12));
    CHECK(d(1) == doctest::Approx(0.9806).epsilon(1e-4));
    CHECK(d(2) == kSimilarityFloor);
}

TEST_CASE("similarity with disjoint supports hits the floor") {
    Matrix p(1, 3);
    p << 0.0, 0.0, 2.0;
    const Vector q = vec({0.5, 0.5, 0.0});
    CHECK(prototype_similarity(p, q)(0) == kSimilarityFloor);
}

TEST_CASE("similarity rejects invalid attention vectors") {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    CHECK_THROWS_AS(prototype_similarity(p, vec({-0.1, 1.1})), ContractError);
    CHECK_THROWS_AS(prototype_similarity(p, vec({0.0, 0.0})), ContractError);
    CHECK_THROWS_AS(prototype_similarity(p, vec({0.5, 0.3, 0.2})), ConfigError);
}

TEST_CASE("similarity gradients match finite differences away from clamps") {
    Rng rng(31);
    Matrix p(2, 3);
    for (Index k = 0; k < 2; ++k)
        for (Index s = 0; s < 3; ++s) p(k, s) = rng.uniform(0.2, 1.0);
    Vector q = vec({0.5, 0.3, 0.2});
    Vector dd = vec({0.7, -0.4});

    auto loss = [&]() { return prototype_similarity(p, q).dot(dd); };

    Matrix dp = Matrix::Zero(2, 3);
    Vector dq = Vector::Zero(3);
    const Vector d = prototype_similarity(p, q);
    prototype_similarity_backward(p, q, d, dd, dp, dq);

    const double h = 1e-6;
    for (Index k = 0; k < 2; ++k) {
        for (Index s = 0; s < 3; ++s) {
            const double saved = p(k, s);
            p(k, s) = saved + h;
            const double up = loss();
            p(k, s) = saved - h;
            const double down = loss();
            p(k, s) = saved;
            CHECK(oracle::rel_err(dp(k, s), (up - down) / (2 * h)) < 1e-4);
        }
    }
    for (Index s = 0; s < 3; ++s) {
        const double saved = q(s);
        q(s) = saved + h;
        const double up = loss();
        q(s) = saved - h;
        const double down = loss();
        q(s) = saved;
        CHECK(oracle::rel_err(dq(s), (up - down) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("gumbel selection: single prototype is always chosen") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const GumbelSample gs = gumbel_softmax_select(vec({0.37}), 0.5, rng);
        CHECK(gs.e(0) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gumbel selection frequencies are uniform for uniform similarities") {
    Rng rng(77);
    const Vector d = Vector::Constant(4, 0.25);
    std::vector<int> counts(4, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const GumbelSample gs = gumbel_softmax_select(d, 0.5, rng);
        Index best = 0;
        for (Index k = 1; k < 4; ++k)
            if (gs.e(k) > gs.e(best)) best = k;
        ++counts[static_cast<std::size_t>(best)];
    }
    // 3 sigma around 1/4 at n=10000
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (int c : counts) CHECK(std::fabs(c / double(n) - 0.25) < 3.0 * sigma + 1e-9);
}

TEST_CASE("gumbel argmax frequencies follow the normalized similarities") {
    // Gumbel-max property: P(argmax = k) = d_k / Σ d, independent of tau.
    Rng rng(99);
    const Vector d = vec({0.9, 0.1});
    int first = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const GumbelSample gs = gumbel_softmax_select(d, 0.1, rng);
        if (gs.e(0) > gs.e(1)) ++first;
    }
    const double sigma = std::sqrt(0.9 * 0.1 / n);
    CHECK(std::fabs(first / double(n) - 0.9) < 3.0 * sigma + 1e-9);
}

TEST_CASE("gumbel selection sharpens toward one-hot as tau shrinks") {
    // near-one-hot requires the top-two noisy-logit gap to exceed
    // tau·log(99), so small tau makes sharp samples common and large tau
    // makes them vanishingly rare
    Rng rng(123);
    const Vector d = vec({0.8, 0.7, 0.2});
    const int n = 2000;
    auto sharp_count = [&](double tau) {
        int sharp = 0;
        for (int i = 0; i < n; ++i) {
            const GumbelSample gs = gumbel_softmax_select(d, tau, rng);
            if (gs.e.maxCoeff() > 0.99) ++sharp;
        }
        return sharp;
    };
    CHECK(sharp_count(0.01) >= static_cast<int>(0.93 * n));
    CHECK(sharp_count(1.0) <= static_cast<int>(0.5 * n));
}

TEST_CASE("gumbel sample stays on the simplex and rejects bad temperature") {
    Rng rng(5);
    const Vector d = vec({0.5, 0.2, 0.3});
    const GumbelSample gs = gumbel_softmax_select(d, 0.5, rng);
    CHECK(gs.e.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gs.e.minCoeff() > 0.0);
    CHECK(gs.e.maxCoeff() < 1.0);
    CHECK_THROWS_AS(gumbel_softmax_select(d, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(gumbel_softmax_select(d, -1.0, rng), ConfigError);
}

TEST_CASE("gumbel softmax gradient matches finite differences at fixed noise") {
    Rng rng(41);
    Vector d = vec({0.6, 0.3, 0.8});
    const Vector noise = vec({0.2, -0.4, 0.9});
    const Vector de = vec({1.0, -0.5, 0.25});
    const double tau = 0.5;

    auto loss = [&]() { return gumbel_softmax_with_noise(d, noise, tau).dot(de); };

    Vector dd = Vector::Zero(3);
    const Vector e = gumbel_softmax_with_noise(d, noise, tau);
    gumbel_softmax_backward(d, e, tau, de, dd);

    const double h = 1e-6;
    for (Index k = 0; k < 3; ++k) {
        const double saved = d(k);
        d(k) = saved + h;
        const double up = loss();
        d(k) = saved - h;
        const double down = loss();
        d(k) = saved;
        CHECK(oracle::rel_err(dd(k), (up - down) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("prototypical attention blends projected prototypes onto the simplex") {
    SUBCASE("one-hot selection returns the normalized prototype") {
        Matrix p(2, 3);
        p << 2.0, 1.0, 1.0, 0.0, 5.0, 0.0;
        const Vector r = prototypical_attention(p, vec({1.0, 0.0}));
        CHECK(r(0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r(1) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(r(2) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("identical prototypes make the selection irrelevant") {
        Matrix p(3, 2);
        p << 0.3, 0.7, 0.3, 0.7, 0.3, 0.7;
        const Vector r1 = prototypical_attention(p, vec({1.0, 0.0, 0.0}));
        const Vector r2 = prototypical_attention(p, vec({0.2, 0.3, 0.5}));
        CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("even blend of unit axes is uniform") {
        Matrix p(2, 2);
        p << 1.0, 0.0, 0.0, 1.0;
        const Vector r = prototypical_attention(p, vec({0.5, 0.5}));
        CHECK(r(0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r(1) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("fully non-positive prototypes fall back to uniform") {
        Matrix p = Matrix::Constant(2, 4, -1.0);
        const Vector r = prototypical_attention(p, vec({0.5, 0.5}));
        for (Index s = 0; s < 4; ++s) CHECK(r(s) == 0.25);
    }
}

TEST_CASE("prototypical attention gradients match finite differences") {
    Rng rng(59);
    Matrix p(2, 3);
    for (Index k = 0; k < 2; ++k)
        for (Index s = 0; s < 3; ++s) p(k, s) = rng.uniform(0.2, 1.0);
    Vector e = vec({0.4, 0.6});
    const Vector dr = vec({0.9, -0.2, 0.5});

    auto loss = [&]() { return prototypical_attention(p, e).dot(dr); };

    Vector de = Vector::Zero(2);
    Matrix dp = Matrix::Zero(2, 3);
    prototypical_attention_backward(p, e, dr, de, dp);

    const double h = 1e-6;
    for (Index k = 0; k < 2; ++k) {
        for (Index s = 0; s < 3; ++s) {
            const double saved = p(k, s);
            p(k, s) = saved + h;
            const double up = loss();
            p(k, s) = saved - h;
            const double down = loss();
            p(k, s) = saved;
            CHECK(oracle::rel_err(dp(k, s), (up - down) / (2 * h)) < 1e-4);
        }
        const double saved = e(k);
        e(k) = saved + h;
        const double up = loss();
        e(k) = saved - h;
        const double down = loss();
        e(k) = saved;
        CHECK(oracle::rel_err(de(k), (up - down) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("diversity loss floors each pair at gamma") {
    SUBCASE("single prototype has nothing to compare") {
        CHECK(diversity_loss(Matrix::Constant(1, 4, 0.5), 0.3).loss == 0.0);
    }
    SUBCASE("identical pair costs its cosine of one") {
        Matrix p(2, 3);
        p << 0.2, 0.5, 0.3, 0.2, 0.5, 0.3;
        CHECK(diversity_loss(p, 0.5).loss == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("mutually orthogonal prototypes sit on the floor") {
        Matrix p(3, 3);
        p << 1, 0, 0, 0, 2, 0, 0, 0, 0.5;
        CHECK(diversity_loss(p, 0.3).loss == doctest::Approx(0.9).epsilon(1e-12));
    }
    SUBCASE("order and positive rescaling do not matter") {
        Rng rng(7);
        Matrix p(3, 4);
        for (Index k = 0; k < 3; ++k)
            for (Index s = 0; s < 4; ++s) p(k, s) = rng.uniform(-1.0, 1.0);
        const double base = diversity_loss(p, 0.4).loss;

        Matrix perm(3, 4);
        perm.row(0) = p.row(2);
        perm.row(1) = p.row(0);
        perm.row(2) = p.row(1);
        CHECK(diversity_loss(perm, 0.4).loss == doctest::Approx(base).epsilon(1e-12));

        Matrix scaled = p;
        scaled.row(1) *= 3.7;
        CHECK(diversity_loss(scaled, 0.4).loss == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("diversity gradients match finite differences off the floor") {
    Rng rng(83);
    Matrix p(3, 3);
    // keep pairwise cosines club above gamma so the max() is smooth
    for (Index k = 0; k < 3; ++k)
        for (Index s = 0; s < 3; ++s) p(k, s) = rng.uniform(0.5, 1.0);
    const double gamma = 0.2;
    REQUIRE(diversity_loss(p, gamma).min_margin > 1e-3);

    Matrix dp = Matrix::Zero(3, 3);
    diversity_backward(p, gamma, 1.0, dp);

    const double h = 1e-6;
    for (Index k = 0; k < 3; ++k) {
        for (Index s = 0; s < 3; ++s) {
            const double saved = p(k, s);
            p(k, s) = saved + h;
            const double up = diversity_loss(p, gamma).loss;
            p(k, s) = saved - h;
            const double down = diversity_loss(p, gamma).loss;
            p(k, s) = saved;
            CHECK(oracle::rel_err(dp(k, s), (up - down) / (2 * h)) < 1e-4);
        }
    }
}

TEST_CASE("floored pairs transmit no diversity gradient") {
    Matrix p(2, 2);
    p << 1.0, 0.0, 0.0, 1.0; // cosine 0 < gamma
    Matrix dp = Matrix::Zero(2, 2);
    diversity_backward(p, 0.5, 1.0, dp);
    CHECK(dp.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("k-means with as many clusters as points keeps the points") {
    Matrix pts(3, 3);
    pts << 1.0, 0.1, 0.0, 0.0, 1.0, 0.1, 0.1, 0.0, 1.0;
    Rng rng(11);
    const Matrix centers = kmeans_init(pts, 3, rng);
    // every normalized point appears as some center
    for (Index i = 0; i < 3; ++i) {
        const Vector unit = pts.row(i).transpose() / pts.row(i).norm();
        double best = -1.0;
        for (Index c = 0; c < 3; ++c) best = std::max(best, unit.dot(centers.row(c).transpose()));
        CHECK(best == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("k-means on identical vectors returns that direction") {
    Matrix pts(5, 2);
    for (Index i = 0; i < 5; ++i) pts.row(i) << 0.3, 0.4;
    Rng rng(2);
    const Matrix centers = kmeans_init(pts, 1, rng);
    CHECK(centers(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(centers(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("k-means separates two well-separated blobs") {
    Rng rng(37);
    Matrix pts(40, 3);
    for (Index i = 0; i < 20; ++i) {
        pts.row(i) << 1.0 + 0.05 * rng.normal(), std::fabs(0.05 * rng.normal()),
            std::fabs(0.05 * rng.normal());
    }
    for (Index i = 20; i < 40; ++i) {
        pts.row(i) << std::fabs(0.05 * rng.normal()), std::fabs(0.05 * rng.normal()),
            1.0 + 0.05 * rng.normal();
    }
    Rng krng(4);
    const Matrix centers = kmeans_init(pts, 2, krng);

    Vector mean_a = Vector::Zero(3), mean_b = Vector::Zero(3);
    for (Index i = 0; i < 20; ++i) mean_a += pts.row(i).transpose() / pts.row(i).norm();
    for (Index i = 20; i < 40; ++i) mean_b += pts.row(i).transpose() / pts.row(i).norm();
    mean_a /= mean_a.norm();
    mean_b /= mean_b.norm();

    // each blob mean is matched by exactly one center at cosine >= 0.99
    double best_a = -1.0, best_b = -1.0;
    for (Index c = 0; c < 2; ++c) {
        best_a = std::max(best_a, mean_a.dot(centers.row(c).transpose()));
        best_b = std::max(best_b, mean_b.dot(centers.row(c).transpose()));
    }
    CHECK(best_a >= 0.99);
    CHECK(best_b >= 0.99);
}

TEST_CASE("k-means is deterministic and validates its inputs") {
    Rng r1(15), r2(15);
    Matrix pts = Matrix::Random(10, 4).cwiseAbs();
    const Matrix c1 = kmeans_init(pts, 3, r1);
    const Matrix c2 = kmeans_init(pts, 3, r2);
    CHECK((c1 - c2).cwiseAbs().maxCoeff() == 0.0);

    Rng r3(1);
    CHECK_THROWS_AS(kmeans_init(pts, 11, r3), ConfigError);
    CHECK_THROWS_AS(kmeans_init(pts, 0, r3), ConfigError);
}
