#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "darknet/matrix.hpp"

namespace darknet {

struct Clustering {
    std::vector<int> labels;       // length N, values in [0, K)
    Matrix centroids;              // K x Q
    int k = 0;
    double inertia = 0.0;          // sum of squared distances to assigned centroids
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::vector<double> inertia_history;  // after each assignment step; non-increasing
};

// Lloyd iterations from k-means++ seeding, best of n_init restarts by final
// inertia. Empty clusters are repaired by reseeding to the point currently
// farthest from its centroid, so K stays constant. Deterministic for a fixed
// seed.
Clustering kmeans(const Matrix& Z, int k, std::uint64_t seed, std::size_t max_iter = 300,
                  double tol = 1e-6, int n_init = 10);

// Mean silhouette coefficient; singleton samples score 0. Needs >= 2 clusters.
double silhouette(const Matrix& Z, const std::vector<int>& labels);

// Pair-count Jaccard between a clustering and an external partition, via
// contingency counts. 0/0 pairs convention: 0.
double jaccard_pair(const std::vector<int>& labels, const std::vector<int>& external);

// Plain set Jaccard; two empty sets count as identical (1).
double jaccard_set(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct StabilityConfig {
    int rounds = 50;                 // bootstrap resamples
    std::size_t sample_size = 50000; // capped at N
    std::uint64_t seed = 0;
};

// Bootstrap cluster stability: mean best-match set Jaccard across all round
// pairs, computed on each pair's common distinct indices.
double stability(const Matrix& Z, int k, const StabilityConfig& cfg);

struct SweepRow {
    int k = 0;
    std::optional<double> jaccard;  // only when external labels were given
    double silhouette = 0.0;
    double inertia = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    int suggested_knee = 0;  // max-distance-to-chord on the jaccard (or inertia) curve; advisory
};

SweepResult k_sweep(const Matrix& Z, const std::vector<int>& k_list,
                    const std::vector<int>* external, std::uint64_t seed);

// Maps arbitrary string labels to dense integer ids (first-seen order).
std::vector<int> densify_labels(const std::vector<std::string>& raw);

}  // namespace darknet
