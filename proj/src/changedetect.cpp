#include "darknet/changedetect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "darknet/common.hpp"
#include "json.hpp"

namespace darknet {

Signature build_signature(const std::vector<int>& labels, const Matrix& X, SignatureSpace space,
                          std::uint64_t schema_fingerprint) {
    if (labels.size() != X.rows) throw InputError("labels do not align with the matrix");
    if (labels.empty()) throw InputError("cannot build a signature from an empty clustering");
    std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& [sum, count] = sums[labels[i]];
        if (sum.empty()) sum.assign(X.cols, 0.0);
        auto row = X.row(i);
        for (std::size_t q = 0; q < X.cols; ++q) sum[q] += row[q];
        ++count;
    }
    Signature sig;
    sig.space = space;
    sig.schema_fingerprint = schema_fingerprint;
    const double n = static_cast<double>(labels.size());
    for (auto& [cluster, entry] : sums) {
        auto& [sum, count] = entry;
        for (double& v : sum) v /= static_cast<double>(count);
        sig.means.push_back(std::move(sum));
        sig.weights.push_back(static_cast<double>(count) / n);
    }
    return sig;
}

namespace {

// Dense transportation simplex. Nodes: sources 0..m-1, sinks m..m+n-1.
struct TransportSolver {
    std::size_t m, n;
    const Matrix& cost;
    std::vector<double> supply, demand;  // perturbed
    Matrix flow;                         // basic flows
    std::vector<std::vector<bool>> basic;

    TransportSolver(const std::vector<double>& a, const std::vector<double>& b, const Matrix& c)
        : m(a.size()), n(b.size()), cost(c), supply(a), demand(b), flow(m, n),
          basic(m, std::vector<bool>(n, false)) {
        // graded epsilon perturbation of demands keeps every basis non-degenerate
        const double eps = 1e-12;
        double added = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = eps * static_cast<double>(j + 1);
            demand[j] += d;
            added += d;
        }
        supply[0] += added;
    }

    void northwest_corner() {
        std::vector<double> a = supply, b = demand;
        std::size_t i = 0, j = 0;
        while (i < m && j < n) {
            const double f = std::min(a[i], b[j]);
            flow.at(i, j) = f;
            basic[i][j] = true;
            a[i] -= f;
            b[j] -= f;
            if (a[i] <= b[j]) ++i;
            else ++j;
        }
    }

    // duals from the basis tree: u[i] + v[j] = cost(i,j) on basic cells
    void compute_duals(std::vector<double>& u, std::vector<double>& v) const {
        u.assign(m, std::numeric_limits<double>::quiet_NaN());
        v.assign(n, std::numeric_limits<double>::quiet_NaN());
        u[0] = 0.0;
        std::vector<std::size_t> stack = {0};  // node ids: sources 0..m-1, sinks m..m+n-1
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < m) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (basic[node][j] && std::isnan(v[j])) {
                        v[j] = cost.at(node, j) - u[node];
                        stack.push_back(m + j);
                    }
                }
            } else {
                const std::size_t j = node - m;
                for (std::size_t i = 0; i < m; ++i) {
                    if (basic[i][j] && std::isnan(u[i])) {
                        u[i] = cost.at(i, j) - v[j];
                        stack.push_back(i);
                    }
                }
            }
        }
    }

    // alternating cycle created by the entering cell, found by walking the
    // basis tree from source ei back to sink ej
    std::vector<std::pair<std::size_t, std::size_t>> find_cycle(std::size_t ei,
                                                                std::size_t ej) const {
        const std::size_t nodes = m + n;
        std::vector<int> parent(nodes, -1);
        std::vector<bool> seen(nodes, false);
        std::vector<std::size_t> queue = {ei};
        seen[ei] = true;
        while (!queue.empty()) {
            const std::size_t node = queue.back();
            queue.pop_back();
            if (node < m) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (basic[node][j] && !seen[m + j]) {
                        seen[m + j] = true;
                        parent[m + j] = static_cast<int>(node);
                        queue.push_back(m + j);
                    }
                }
            } else {
                const std::size_t j = node - m;
                for (std::size_t i = 0; i < m; ++i) {
                    if (basic[i][j] && !seen[i]) {
                        seen[i] = true;
                        parent[i] = static_cast<int>(m + j);
                        queue.push_back(i);
                    }
                }
            }
        }
        std::vector<std::size_t> path;  // node sequence sink ej -> ... -> source ei
        for (int at = static_cast<int>(m + ej); at != -1; at = parent[static_cast<std::size_t>(at)])
            path.push_back(static_cast<std::size_t>(at));
        // cells along the cycle, starting with the entering one
        std::vector<std::pair<std::size_t, std::size_t>> cells = {{ei, ej}};
        for (std::size_t p = 0; p + 1 < path.size(); ++p) {
            const std::size_t x = path[p], y = path[p + 1];
            if (x >= m) cells.emplace_back(y, x - m);
            else cells.emplace_back(x, y - m);
        }
        return cells;
    }

    void solve() {
        northwest_corner();
        std::vector<double> u, v;
        const std::size_t max_pivots = 40 * (m + n) * (m + n) + 1000;
        for (std::size_t pivot = 0; pivot < max_pivots; ++pivot) {
            compute_duals(u, v);
            double most_negative = -1e-11;
            std::size_t ei = 0, ej = 0;
            bool found = false;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (basic[i][j]) continue;
                    const double rc = cost.at(i, j) - u[i] - v[j];
                    if (rc < most_negative) {
                        most_negative = rc;
                        ei = i;
                        ej = j;
                        found = true;
                    }
                }
            }
            if (!found) return;  // optimal

            auto cells = find_cycle(ei, ej);
            // odd positions give flow to the entering cell
            double theta = std::numeric_limits<double>::infinity();
            std::size_t leave = 1;
            for (std::size_t p = 1; p < cells.size(); p += 2) {
                const double f = flow.at(cells[p].first, cells[p].second);
                if (f < theta) {
                    theta = f;
                    leave = p;
                }
            }
            for (std::size_t p = 0; p < cells.size(); ++p) {
                double& f = flow.at(cells[p].first, cells[p].second);
                f += (p % 2 == 0) ? theta : -theta;
            }
            basic[ei][ej] = true;
            basic[cells[leave].first][cells[leave].second] = false;
            flow.at(cells[leave].first, cells[leave].second) = 0.0;
        }
        throw NumericError("transport solver did not converge");
    }

    // exact flows for the original (unperturbed) marginals on the final basis
    // tree, recovered by leaf stripping
    Matrix exact_flows(const std::vector<double>& a0, const std::vector<double>& b0) const {
        Matrix f(m, n, 0.0);
        std::vector<double> residual(m + n);
        for (std::size_t i = 0; i < m; ++i) residual[i] = a0[i];
        for (std::size_t j = 0; j < n; ++j) residual[m + j] = b0[j];
        std::vector<std::vector<bool>> live = basic;
        std::vector<std::size_t> degree(m + n, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (live[i][j]) {
                    ++degree[i];
                    ++degree[m + j];
                }
        std::vector<std::size_t> leaves;
        for (std::size_t node = 0; node < m + n; ++node)
            if (degree[node] == 1) leaves.push_back(node);
        while (!leaves.empty()) {
            const std::size_t node = leaves.back();
            leaves.pop_back();
            if (degree[node] != 1) continue;
            std::size_t oi = 0, oj = 0;
            bool got = false;
            if (node < m) {
                for (std::size_t j = 0; j < n && !got; ++j)
                    if (live[node][j]) {
                        oi = node;
                        oj = j;
                        got = true;
                    }
            } else {
                for (std::size_t i = 0; i < m && !got; ++i)
                    if (live[i][node - m]) {
                        oi = i;
                        oj = node - m;
                        got = true;
                    }
            }
            if (!got) continue;
            const double amount = node < m ? residual[oi] : residual[m + oj];
            f.at(oi, oj) = amount;
            residual[oi] -= amount;
            residual[m + oj] -= amount;
            live[oi][oj] = false;
            --degree[oi];
            --degree[m + oj];
            if (degree[oi] == 1) leaves.push_back(oi);
            if (degree[m + oj] == 1) leaves.push_back(m + oj);
        }
        return f;
    }
};

double ground_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        const double d = a[q] - b[q];
        s += d * d;
    }
    return std::sqrt(s);
}

// total order on signatures for the canonical solve orientation
bool signature_less(const Signature& a, const Signature& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    if (a.weights != b.weights) return a.weights < b.weights;
    return a.means < b.means;
}

double solve_emd(const Signature& a, const Signature& b, TransportPlan* plan) {
    const std::size_t m = a.size(), n = b.size();
    Matrix cost(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) cost.at(i, j) = ground_distance(a.means[i], b.means[j]);

    TransportSolver solver(a.weights, b.weights, cost);
    solver.solve();
    Matrix flows = solver.exact_flows(a.weights, b.weights);

    // optimality certificate against the final duals
    std::vector<double> u, v;
    solver.compute_duals(u, v);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (cost.at(i, j) - u[i] - v[j] < -1e-9)
                throw NumericError("transport solver returned a non-optimal basis");

    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double& f = flows.at(i, j);
            if (f < 0) {
                if (f < -1e-7) throw NumericError("transport solver produced an infeasible plan");
                f = 0.0;
            }
            total += f * cost.at(i, j);
        }
    }
    // marginal check
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += flows.at(i, j);
        if (std::abs(s - a.weights[i]) > 1e-9)
            throw NumericError("transport plan does not reproduce the source weights");
    }
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += flows.at(i, j);
        if (std::abs(s - b.weights[j]) > 1e-9)
            throw NumericError("transport plan does not reproduce the sink weights");
    }
    if (plan) {
        plan->flow = std::move(flows);
        plan->cost = total;
    }
    return total;
}

}  // namespace

double emd(const Signature& a, const Signature& b, TransportPlan* plan) {
    if (a.space != b.space) throw InputError("signatures live in different spaces");
    if (a.schema_fingerprint != b.schema_fingerprint)
        throw InputError("signatures were built against different schemas");
    if (a.size() == 0 || b.size() == 0) throw InputError("empty signature");
    if (a.dim() != b.dim()) throw InputError("signature dimensionality mismatch");
    double wa = 0.0, wb = 0.0;
    for (double w : a.weights) wa += w;
    for (double w : b.weights) wb += w;
    if (std::abs(wa - 1.0) > 1e-9 || std::abs(wb - 1.0) > 1e-9)
        throw InputError("signature weights must sum to 1");

    // canonical orientation makes emd(a,b) and emd(b,a) the same computation
    if (signature_less(b, a)) {
        TransportPlan swapped;
        const double value = solve_emd(b, a, plan ? &swapped : nullptr);
        if (plan) {
            plan->cost = swapped.cost;
            plan->flow = Matrix(a.size(), b.size());
            for (std::size_t i = 0; i < a.size(); ++i)
                for (std::size_t j = 0; j < b.size(); ++j)
                    plan->flow.at(i, j) = swapped.flow.at(j, i);
        }
        return value;
    }
    return solve_emd(a, b, plan);
}

DistanceSeries diff_series(const std::vector<std::pair<std::string, Signature>>& signatures,
                           double kappa) {
    if (signatures.size() < 2) throw InputError("diff needs at least two days");
    for (std::size_t i = 0; i + 1 < signatures.size(); ++i) {
        if (signatures[i].first >= signatures[i + 1].first)
            throw InputError("days must be strictly increasing");
        if (signatures[i].second.space != signatures[i + 1].second.space)
            throw InputError("signatures mix spaces");
    }
    DistanceSeries series;
    series.kappa = kappa;
    for (std::size_t i = 0; i + 1 < signatures.size(); ++i) {
        series.days.push_back(signatures[i + 1].first);
        series.emds.push_back(emd(signatures[i].second, signatures[i + 1].second));
    }
    std::vector<double> sorted = series.emds;
    std::sort(sorted.begin(), sorted.end());
    auto median_of = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    };
    series.median = median_of(sorted);
    std::vector<double> deviations;
    deviations.reserve(sorted.size());
    for (double e : series.emds) deviations.push_back(std::abs(e - series.median));
    std::sort(deviations.begin(), deviations.end());
    series.mad = median_of(deviations);
    const double threshold = series.median + kappa * series.mad;
    for (double e : series.emds) series.flags.push_back(e > threshold);
    return series;
}

std::string signature_to_json(const Signature& sig) {
    nlohmann::json j;
    j["format"] = "darknet-signature-v1";
    j["space"] = sig.space == SignatureSpace::Input ? "input" : "latent";
    j["schema_fingerprint"] = to_hex(sig.schema_fingerprint);
    auto& entries = j["entries"] = nlohmann::json::array();
    for (std::size_t i = 0; i < sig.size(); ++i)
        entries.push_back({{"mean", sig.means[i]}, {"weight", sig.weights[i]}});
    return j.dump();
}

Signature signature_from_json(const std::string& serialized) {
    nlohmann::json j = nlohmann::json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-signature-v1")
        throw InputError("not a recognizable signature file");
    Signature sig;
    sig.space = j.at("space").get<std::string>() == "latent" ? SignatureSpace::Latent
                                                             : SignatureSpace::Input;
    sig.schema_fingerprint = std::stoull(j.at("schema_fingerprint").get<std::string>(), nullptr, 16);
    for (const auto& entry : j.at("entries")) {
        sig.means.push_back(entry.at("mean").get<std::vector<double>>());
        sig.weights.push_back(entry.at("weight").get<double>());
    }
    return sig;
}

}  // namespace darknet
