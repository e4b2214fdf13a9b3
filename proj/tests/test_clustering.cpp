#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "darknet/clustering.hpp"
#include "darknet/rng.hpp"
#include "darknet/common.hpp"
#include "doctest.h"

using namespace darknet;

namespace {

Matrix blobs(std::size_t per_blob, std::size_t dims, const std::vector<double>& centers,
             double sigma, std::uint64_t seed) {
    Rng rng(seed);
    Matrix z(per_blob * centers.size(), dims);
    std::size_t row = 0;
    for (double c : centers)
        for (std::size_t i = 0; i < per_blob; ++i, ++row)
            for (std::size_t d = 0; d < dims; ++d) z.at(row, d) = c + rng.normal() * sigma;
    return z;
}

// silhouette straight from the definition, O(N^2) per sample
double silhouette_oracle(const Matrix& z, const std::vector<int>& labels) {
    const std::size_t n = z.rows;
    int k = 0;
    for (int lab : labels) k = std::max(k, lab + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t own_count = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (labels[j] == labels[i]) ++own_count;
        if (own_count <= 1) continue;
        double a = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i])
                a += euclidean_distance(z.row(i), z.row(j));
        a /= static_cast<double>(own_count - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == labels[i]) continue;
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (labels[j] == c) {
                    sum += euclidean_distance(z.row(i), z.row(j));
                    ++count;
                }
            if (count > 0) b = std::min(b, sum / static_cast<double>(count));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

// pair enumeration oracle for the jaccard score
double jaccard_oracle(const std::vector<int>& c, const std::vector<int>& p) {
    double m11 = 0, m10 = 0, m01 = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            const bool same_c = c[i] == c[j];
            const bool same_p = p[i] == p[j];
            if (same_c && same_p) m11 += 1;
            else if (same_c) m10 += 1;
            else if (same_p) m01 += 1;
        }
    }
    const double denom = m01 + m10 + m11;
    return denom > 0 ? m11 / denom : 0.0;
}

}  // namespace

TEST_CASE("kmeans saturation and mean identities") {
    Rng rng(3);
    Matrix z(12, 3);
    for (double& v : z.data) v = rng.normal();

    // K == N: every point its own centroid, inertia 0
    auto full = kmeans(z, 12, 7);
    CHECK(full.inertia == doctest::Approx(0.0).epsilon(1e-12));
    std::set<int> labels(full.labels.begin(), full.labels.end());
    CHECK(labels.size() == 12);

    // K == 1: the centroid is the column mean
    auto one = kmeans(z, 1, 7);
    for (std::size_t d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 12; ++i) mean += z.at(i, d);
        mean /= 12.0;
        CHECK(one.centroids.at(0, d) == doctest::Approx(mean));
    }

    CHECK_THROWS_AS(kmeans(z, 13, 7), NumericError);
    CHECK_THROWS_AS(kmeans(z, 0, 7), InputError);
}

TEST_CASE("well separated blobs are recovered exactly") {
    // two gaussian blobs 20 sigma apart
    auto z = blobs(100, 4, {0.0, 20.0}, 1.0, 5);
    auto clustering = kmeans(z, 2, 11);
    std::set<int> first(clustering.labels.begin(), clustering.labels.begin() + 100);
    std::set<int> second(clustering.labels.begin() + 100, clustering.labels.end());
    CHECK(first.size() == 1);
    CHECK(second.size() == 1);
    CHECK(*first.begin() != *second.begin());
}

TEST_CASE("lloyd iterations never increase the inertia") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        auto z = blobs(60, 5, {0.0, 3.0, 6.0}, 2.0, seed);  // overlapping blobs
        auto clustering = kmeans(z, 7, seed);
        REQUIRE(clustering.inertia_history.size() >= 2);
        for (std::size_t t = 1; t < clustering.inertia_history.size(); ++t)
            CHECK(clustering.inertia_history[t] <= clustering.inertia_history[t - 1] + 1e-9);
    }
}

TEST_CASE("kmeans is deterministic for a fixed seed and repairs empty clusters") {
    auto z = blobs(40, 3, {0.0, 1.0}, 0.5, 9);
    auto a = kmeans(z, 10, 42);
    auto b = kmeans(z, 10, 42);
    CHECK(a.labels == b.labels);
    CHECK(a.inertia == b.inertia);

    // duplicated points force potential empty clusters; K must stay populated
    Matrix dup(30, 2);
    for (std::size_t i = 0; i < 30; ++i) {
        dup.at(i, 0) = i < 15 ? 0.0 : 5.0;
        dup.at(i, 1) = 0.0;
    }
    auto c = kmeans(dup, 6, 1);
    std::vector<std::size_t> counts(6, 0);
    for (int lab : c.labels) ++counts[static_cast<std::size_t>(lab)];
    for (auto count : counts) CHECK(count > 0);
}

TEST_CASE("silhouette hand example and conventions") {
    // clusters {(0,0),(0,1)} and {(10,0),(10,1)}: sc = (b-a)/b with a=1
    Matrix z(4, 2);
    z.at(0, 0) = 0; z.at(0, 1) = 0;
    z.at(1, 0) = 0; z.at(1, 1) = 1;
    z.at(2, 0) = 10; z.at(2, 1) = 0;
    z.at(3, 0) = 10; z.at(3, 1) = 1;
    const std::vector<int> labels = {0, 0, 1, 1};
    const double b = (10.0 + std::sqrt(101.0)) / 2.0;
    const double expected = (b - 1.0) / b;
    CHECK(silhouette(z, labels) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.9003).epsilon(1e-4));

    // two singleton clusters score 0 by convention
    Matrix two(2, 2);
    two.at(1, 0) = 4.0;
    CHECK(silhouette(two, {0, 1}) == doctest::Approx(0.0));

    CHECK_THROWS_AS(silhouette(two, {0, 0}), InputError);
    CHECK_THROWS_AS(silhouette(two, {0}), InputError);
}

TEST_CASE("silhouette matches the brute-force reference within 1e-9") {
    for (std::uint64_t seed : {2ull, 7ull}) {
        auto z = blobs(100, 3, {0.0, 2.5, 5.0, 9.0}, 1.3, seed);  // N = 400
        auto clustering = kmeans(z, 5, seed);
        CHECK(silhouette(z, clustering.labels) ==
              doctest::Approx(silhouette_oracle(z, clustering.labels)).epsilon(1e-9));
    }
}

TEST_CASE("silhouette is invariant to label renaming") {
    auto z = blobs(30, 2, {0.0, 4.0, 8.0}, 1.0, 3);
    auto clustering = kmeans(z, 3, 3);
    std::vector<int> renamed;
    for (int lab : clustering.labels) renamed.push_back((lab + 1) % 3);
    CHECK(silhouette(z, clustering.labels) == doctest::Approx(silhouette(z, renamed)));
}

TEST_CASE("pair-count jaccard: worked example, conventions and oracle") {
    CHECK(jaccard_pair({0, 0, 1, 1}, {5, 5, 9, 9}) == doctest::Approx(1.0));
    // spec example: M11=1, M01=2, M10=1 -> 0.25
    CHECK(jaccard_pair({1, 1, 2, 2}, {1, 1, 1, 2}) == doctest::Approx(0.25));
    // all singletons on both sides: 0/0 -> 0
    CHECK(jaccard_pair({0, 1, 2}, {2, 1, 0}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(jaccard_pair({0, 1}, {0}), InputError);

    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> c(300), p(300);
        for (auto& v : c) v = static_cast<int>(rng.below(6));
        for (auto& v : p) v = static_cast<int>(rng.below(4));
        CHECK(jaccard_pair(c, p) == doctest::Approx(jaccard_oracle(c, p)).epsilon(1e-12));
    }

    // relabeling invariance
    std::vector<int> c(100), p(100);
    for (std::size_t i = 0; i < 100; ++i) {
        c[i] = static_cast<int>(i % 5);
        p[i] = static_cast<int>(i % 3);
    }
    std::vector<int> c2;
    for (int v : c) c2.push_back(4 - v);
    CHECK(jaccard_pair(c, p) == doctest::Approx(jaccard_pair(c2, p)));
}

TEST_CASE("set jaccard conventions") {
    CHECK(jaccard_set({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(jaccard_set({1, 2}, {3, 4}) == doctest::Approx(0.0));
    CHECK(jaccard_set({1, 2, 3}, {2, 3, 4}) == doctest::Approx(0.5));
    CHECK(jaccard_set({}, {}) == doctest::Approx(1.0));
    CHECK(jaccard_set({}, {1}) == doctest::Approx(0.0));
}

TEST_CASE("stability: identical rounds, separable data, and noise contrast") {
    // unambiguous clusterings agree exactly on the common support: score 1.0
    auto z = blobs(50, 3, {0.0, 10.0}, 0.8, 17);
    StabilityConfig cfg;
    cfg.rounds = 2;
    cfg.sample_size = z.rows;
    cfg.seed = 5;
    CHECK(stability(z, 2, cfg) == doctest::Approx(1.0));

    // well separated blobs stay stable
    cfg.rounds = 10;
    cfg.sample_size = 80;
    const double separable = stability(z, 2, cfg);
    CHECK(separable >= 0.9);

    // uniform noise with many clusters is strictly less stable
    Rng rng(23);
    Matrix noise(100, 3);
    for (double& v : noise.data) v = rng.uniform();
    const double noisy = stability(noise, 10, cfg);
    CHECK(noisy < separable);

    CHECK_THROWS_AS(stability(z, 2, StabilityConfig{1, 10, 0}), InputError);
}

TEST_CASE("k sweep emits one row per K and respects ordering") {
    auto z = blobs(40, 3, {0.0, 5.0, 10.0, 15.0}, 0.7, 29);
    std::vector<int> external(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) external[i] = static_cast<int>(i / 40);

    auto sweep = k_sweep(z, {2, 4, 8, 16}, &external, 31);
    REQUIRE(sweep.rows.size() == 4);
    for (const auto& row : sweep.rows) {
        CHECK(row.jaccard.has_value());
        CHECK(row.inertia >= 0.0);
    }
    // refining past the true K drops the external agreement
    CHECK(*sweep.rows[1].jaccard >= *sweep.rows[3].jaccard);
    CHECK(sweep.suggested_knee >= 2);

    auto single = k_sweep(z, {4}, nullptr, 31);
    REQUIRE(single.rows.size() == 1);
    CHECK_FALSE(single.rows[0].jaccard.has_value());

    CHECK_THROWS_AS(k_sweep(z, {4, 2}, nullptr, 31), InputError);
}
