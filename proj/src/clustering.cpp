#include "darknet/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "darknet/common.hpp"
#include "darknet/rng.hpp"

namespace darknet {

namespace {

int nearest_centroid(const Matrix& Z, std::size_t i, const Matrix& centroids, double* dist_sq) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    auto z = Z.row(i);
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        double d = squared_distance(z, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist_sq) *dist_sq = best_d;
    return best;
}

Matrix kmeanspp_seed(const Matrix& Z, int k, Rng& rng) {
    const std::size_t n = Z.rows;
    Matrix centroids(static_cast<std::size_t>(k), Z.cols);
    std::vector<double> min_d(n, std::numeric_limits<double>::infinity());

    std::size_t first = static_cast<std::size_t>(rng.below(n));
    std::copy(Z.row(first).begin(), Z.row(first).end(), centroids.row(0).begin());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = squared_distance(Z.row(i), centroids.row(static_cast<std::size_t>(c - 1)));
            min_d[i] = std::min(min_d[i], d);
            total += min_d[i];
        }
        std::size_t pick = 0;
        if (total > 0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        std::copy(Z.row(pick).begin(), Z.row(pick).end(),
                  centroids.row(static_cast<std::size_t>(c)).begin());
    }
    return centroids;
}

}  // namespace

namespace {

Clustering kmeans_single(const Matrix& Z, int k, std::uint64_t seed, std::size_t max_iter,
                         double tol) {
    const std::size_t n = Z.rows;
    Rng rng(derive_seed(seed, 0x6b6d));
    Clustering result;
    result.k = k;
    result.seed = seed;
    result.centroids = kmeanspp_seed(Z, k, rng);
    result.labels.assign(n, 0);

    std::vector<double> dist(n, 0.0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // assignment
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            result.labels[i] = nearest_centroid(Z, i, result.centroids, &dist[i]);
            inertia += dist[i];
        }

        // repair empty clusters before the update step
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (int lab : result.labels) ++counts[static_cast<std::size_t>(lab)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t farthest = 0;
            double worst = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(result.labels[i])] > 1 && dist[i] > worst) {
                    worst = dist[i];
                    farthest = i;
                }
            }
            --counts[static_cast<std::size_t>(result.labels[farthest])];
            result.labels[farthest] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            inertia -= dist[farthest];
            dist[farthest] = 0.0;
            std::copy(Z.row(farthest).begin(), Z.row(farthest).end(),
                      result.centroids.row(static_cast<std::size_t>(c)).begin());
        }

        result.inertia_history.push_back(inertia);
        result.inertia = inertia;
        result.iterations = iter + 1;

        // update: centroids become the member means of the current labels
        Matrix next(static_cast<std::size_t>(k), Z.cols, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto z = Z.row(i);
            auto c = next.row(static_cast<std::size_t>(result.labels[i]));
            for (std::size_t q = 0; q < Z.cols; ++q) c[q] += z[q];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            auto row = next.row(static_cast<std::size_t>(c));
            const double cnt = static_cast<double>(counts[static_cast<std::size_t>(c)]);
            for (std::size_t q = 0; q < Z.cols; ++q) row[q] /= cnt;
            shift = std::max(shift, euclidean_distance(
                                        row, result.centroids.row(static_cast<std::size_t>(c))));
        }
        result.centroids = std::move(next);

        if (shift < tol || inertia >= prev_inertia - 1e-15) {
            // keep the repaired labels; inertia against the settled member means
            double final_inertia = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                final_inertia += squared_distance(
                    Z.row(i), result.centroids.row(static_cast<std::size_t>(result.labels[i])));
            result.inertia_history.push_back(final_inertia);
            result.inertia = final_inertia;
            break;
        }
        prev_inertia = inertia;
    }
    return result;
}

}  // namespace

Clustering kmeans(const Matrix& Z, int k, std::uint64_t seed, std::size_t max_iter, double tol,
                  int n_init) {
    const std::size_t n = Z.rows;
    if (k < 1) throw InputError("k must be >= 1");
    if (n_init < 1) throw InputError("n_init must be >= 1");
    if (static_cast<std::size_t>(k) > n)
        throw NumericError("k exceeds the number of samples (" + std::to_string(k) + " > " +
                           std::to_string(n) + ")");
    Clustering best;
    for (int restart = 0; restart < n_init; ++restart) {
        Clustering run = kmeans_single(
            Z, k, derive_seed(seed, 0x7e57a7 + static_cast<std::uint64_t>(restart)), max_iter,
            tol);
        if (restart == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    best.seed = seed;
    return best;
}

double silhouette(const Matrix& Z, const std::vector<int>& labels) {
    const std::size_t n = Z.rows;
    if (labels.size() != n) throw InputError("labels length does not match the matrix");
    int k = 0;
    for (int lab : labels) k = std::max(k, lab + 1);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int lab : labels) ++counts[static_cast<std::size_t>(lab)];
    std::size_t nonempty = 0;
    for (auto c : counts) nonempty += c > 0 ? 1 : 0;
    if (nonempty < 2) throw InputError("silhouette needs at least two clusters");

    double total = 0.0;
    std::vector<double> sums(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            sums[static_cast<std::size_t>(labels[j])] += euclidean_distance(Z.row(i), Z.row(j));
        }
        const auto own = static_cast<std::size_t>(labels[i]);
        if (counts[own] <= 1) continue;  // singleton convention: sc = 0
        const double a = sums[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, sums[c] / static_cast<double>(counts[c]));
        }
        const double denom = std::max(a, b);
        total += denom > 0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

namespace {

double pairs2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double jaccard_pair(const std::vector<int>& labels, const std::vector<int>& external) {
    if (labels.size() != external.size())
        throw InputError("label vectors must have equal length");
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        cells[{labels[i], external[i]}] += 1.0;
        rows[labels[i]] += 1.0;
        cols[external[i]] += 1.0;
    }
    double m11 = 0.0;
    for (const auto& [cell, cnt] : cells) m11 += pairs2(cnt);
    double same_c = 0.0, same_p = 0.0;
    for (const auto& [lab, cnt] : rows) same_c += pairs2(cnt);
    for (const auto& [lab, cnt] : cols) same_p += pairs2(cnt);
    const double m10 = same_c - m11;
    const double m01 = same_p - m11;
    const double denom = m01 + m10 + m11;
    return denom > 0 ? m11 / denom : 0.0;
}

double jaccard_set(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    std::size_t ia = 0, ib = 0;  // both sorted
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] == b[ib]) {
            ++inter;
            ++ia;
            ++ib;
        } else if (a[ia] < b[ib]) {
            ++ia;
        } else {
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double stability(const Matrix& Z, int k, const StabilityConfig& cfg) {
    if (cfg.rounds < 2) throw InputError("stability needs at least two bootstrap rounds");
    const std::size_t n = Z.rows;
    const std::size_t sample_size = std::min(cfg.sample_size, n);
    if (sample_size == 0) throw InputError("stability needs a non-empty sample");

    struct Round {
        std::vector<std::size_t> distinct;            // sorted distinct original indices
        std::unordered_map<std::size_t, int> labels;  // original index -> cluster
    };
    std::vector<Round> rounds(static_cast<std::size_t>(cfg.rounds));
    for (int r = 0; r < cfg.rounds; ++r) {
        Rng rng(derive_seed(cfg.seed, 0xb007 + static_cast<std::uint64_t>(r)));
        std::vector<std::size_t> sample(sample_size);
        for (auto& idx : sample) idx = static_cast<std::size_t>(rng.below(n));
        Matrix sub(sample_size, Z.cols);
        for (std::size_t i = 0; i < sample_size; ++i)
            std::copy(Z.row(sample[i]).begin(), Z.row(sample[i]).end(), sub.row(i).begin());

        auto clustering =
            kmeans(sub, std::min<int>(k, static_cast<int>(sample_size)),
                   derive_seed(cfg.seed, 0xc135 + static_cast<std::uint64_t>(r)));
        Round& round = rounds[static_cast<std::size_t>(r)];
        for (std::size_t i = 0; i < sample_size; ++i)
            round.labels.emplace(sample[i], clustering.labels[i]);
        round.distinct.reserve(round.labels.size());
        for (const auto& [idx, lab] : round.labels) round.distinct.push_back(idx);
        std::sort(round.distinct.begin(), round.distinct.end());
    }

    double total = 0.0;
    std::size_t terms = 0;
    for (int r = 0; r < cfg.rounds; ++r) {
        for (int s = r + 1; s < cfg.rounds; ++s) {
            const Round& a = rounds[static_cast<std::size_t>(r)];
            const Round& b = rounds[static_cast<std::size_t>(s)];
            std::vector<std::size_t> common;
            std::set_intersection(a.distinct.begin(), a.distinct.end(), b.distinct.begin(),
                                  b.distinct.end(), std::back_inserter(common));
            if (common.empty()) continue;
            // clusters restricted to the common support, per side
            auto collect = [&](const Round& round) {
                std::map<int, std::vector<std::size_t>> clusters;
                for (std::size_t idx : common) clusters[round.labels.at(idx)].push_back(idx);
                return clusters;
            };
            auto ca = collect(a);
            auto cb = collect(b);
            auto score_side = [&](const auto& from, const auto& to) {
                for (const auto& [lab, members] : from) {
                    double best = 0.0;
                    for (const auto& [lab2, members2] : to)
                        best = std::max(best, jaccard_set(members, members2));
                    total += best;
                    ++terms;
                }
            };
            score_side(ca, cb);
            score_side(cb, ca);
        }
    }
    if (terms == 0) throw NumericError("bootstrap samples never overlapped");
    return total / static_cast<double>(terms);
}

SweepResult k_sweep(const Matrix& Z, const std::vector<int>& k_list,
                    const std::vector<int>* external, std::uint64_t seed) {
    SweepResult result;
    for (std::size_t i = 0; i + 1 < k_list.size(); ++i)
        if (k_list[i] >= k_list[i + 1]) throw InputError("k list must be strictly ascending");
    for (int k : k_list) {
        auto clustering = kmeans(Z, k, derive_seed(seed, 0x9cee + static_cast<std::uint64_t>(k)));
        SweepRow row;
        row.k = k;
        row.inertia = clustering.inertia;
        row.silhouette = k > 1 ? silhouette(Z, clustering.labels) : 0.0;
        if (external) row.jaccard = jaccard_pair(clustering.labels, *external);
        result.rows.push_back(row);
    }
    // knee: farthest point from the chord between the curve's endpoints
    if (result.rows.size() >= 3) {
        auto value = [&](const SweepRow& r) { return r.jaccard ? *r.jaccard : r.inertia; };
        const double x0 = result.rows.front().k, y0 = value(result.rows.front());
        const double x1 = result.rows.back().k, y1 = value(result.rows.back());
        const double len = std::hypot(x1 - x0, y1 - y0);
        double best = -1.0;
        for (const auto& row : result.rows) {
            const double xp = row.k, yp = value(row);
            const double d =
                len > 0 ? std::abs((x1 - x0) * (y0 - yp) - (x0 - xp) * (y1 - y0)) / len : 0.0;
            if (d > best) {
                best = d;
                result.suggested_knee = row.k;
            }
        }
    } else if (!result.rows.empty()) {
        result.suggested_knee = result.rows.front().k;
    }
    return result;
}

std::vector<int> densify_labels(const std::vector<std::string>& raw) {
    std::vector<int> out;
    out.reserve(raw.size());
    std::map<std::string, int> ids;
    for (const auto& s : raw) {
        auto [it, inserted] = ids.emplace(s, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

}  // namespace darknet
