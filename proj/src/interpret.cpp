#include "darknet/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <unordered_map>

#include "darknet/common.hpp"
#include "json.hpp"

namespace darknet {

std::vector<InterpretRow> make_interpret_rows(const std::vector<ScannerProfile>& profiles,
                                              const std::vector<int>& labels) {
    if (profiles.size() != labels.size())
        throw InputError("labels do not align with profiles");
    std::vector<InterpretRow> rows;
    rows.reserve(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        InterpretRow row;
        row.numeric = numeric_features(profiles[i]);
        row.tags = grouping_tag_values(profiles[i].grouping);
        row.target = labels[i];
        rows.push_back(row);
    }
    return rows;
}

namespace {

bool satisfies(const SplitCandidate& c, const InterpretRow& row) {
    if (c.is_tag) return row.tags[static_cast<std::size_t>(c.feature)];
    return row.numeric[static_cast<std::size_t>(c.feature)] <= c.threshold;
}

struct ClassIndex {
    std::vector<int> labels;              // sorted distinct targets
    std::unordered_map<int, int> to_idx;  // target -> dense index

    explicit ClassIndex(const std::vector<InterpretRow>& rows) {
        for (const auto& r : rows) labels.push_back(r.target);
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        for (std::size_t i = 0; i < labels.size(); ++i)
            to_idx.emplace(labels[i], static_cast<int>(i));
    }
};

std::vector<std::size_t> histogram_of(const std::vector<InterpretRow>& rows,
                                      const std::vector<std::size_t>& idx,
                                      const ClassIndex& classes) {
    std::vector<std::size_t> hist(classes.labels.size(), 0);
    for (std::size_t i : idx) ++hist[static_cast<std::size_t>(classes.to_idx.at(rows[i].target))];
    return hist;
}

// majority with lowest-label tie-break
int majority_of(const std::vector<std::size_t>& hist, const ClassIndex& classes) {
    std::size_t best_count = 0;
    int best = classes.labels.empty() ? 0 : classes.labels.front();
    for (std::size_t c = 0; c < hist.size(); ++c) {
        if (hist[c] > best_count) {
            best_count = hist[c];
            best = classes.labels[c];
        }
    }
    return best;
}

double gini(const std::vector<std::size_t>& hist, std::size_t n) {
    if (n == 0) return 0.0;
    double g = 1.0;
    for (std::size_t c : hist) {
        double p = static_cast<double>(c) / static_cast<double>(n);
        g -= p * p;
    }
    return g;
}

}  // namespace

std::vector<SplitCandidate> build_candidates(const std::vector<InterpretRow>& rows,
                                             int threshold_cap) {
    std::vector<SplitCandidate> candidates;
    for (std::size_t t = 0; t < kGroupingTagCount; ++t)
        candidates.push_back({true, static_cast<int>(t), 0.0});

    for (std::size_t f = 0; f < kNumericFeatureCount; ++f) {
        std::vector<double> values;
        values.reserve(rows.size());
        for (const auto& r : rows) values.push_back(r.numeric[f]);
        std::sort(values.begin(), values.end());
        std::vector<double> distinct = values;
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 2) continue;

        std::vector<double> thresholds;
        if (threshold_cap <= 0 ||
            distinct.size() - 1 <= static_cast<std::size_t>(threshold_cap)) {
            for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
                thresholds.push_back((distinct[i] + distinct[i + 1]) / 2.0);
        } else {
            // quantile-based cut points over the full value distribution
            for (int j = 1; j <= threshold_cap; ++j) {
                std::size_t pos = static_cast<std::size_t>(
                    static_cast<double>(j) * static_cast<double>(values.size()) /
                    (threshold_cap + 1));
                pos = std::min(pos, values.size() - 1);
                double v = values[pos];
                auto next = std::upper_bound(distinct.begin(), distinct.end(), v);
                if (next == distinct.end()) continue;
                thresholds.push_back((v + *next) / 2.0);
            }
            std::sort(thresholds.begin(), thresholds.end());
            thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                             thresholds.end());
        }
        for (double thr : thresholds) candidates.push_back({false, static_cast<int>(f), thr});
    }
    return candidates;
}

namespace {

struct GreedyBuilder {
    const std::vector<InterpretRow>& rows;
    const std::vector<SplitCandidate>& candidates;
    const TreeConfig& cfg;
    const ClassIndex& classes;
    DecisionTree tree;

    int make_leaf(const std::vector<std::size_t>& idx) {
        TreeNode node;
        node.leaf = true;
        node.histogram = histogram_of(rows, idx, classes);
        node.prediction = majority_of(node.histogram, classes);
        tree.nodes.push_back(std::move(node));
        return static_cast<int>(tree.nodes.size() - 1);
    }

    int build(const std::vector<std::size_t>& idx, int depth) {
        auto hist = histogram_of(rows, idx, classes);
        const double parent_gini = gini(hist, idx.size());
        const bool pure = parent_gini <= 0.0;
        if (depth >= cfg.max_depth || pure || idx.size() < 2 * cfg.min_leaf)
            return make_leaf(idx);

        double best_gain = 1e-12;
        int best_cand = -1;
        std::vector<std::size_t> right_hist(classes.labels.size());
        for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
            std::fill(right_hist.begin(), right_hist.end(), 0);
            std::size_t n_right = 0;
            for (std::size_t i : idx) {
                if (satisfies(candidates[ci], rows[i])) {
                    ++right_hist[static_cast<std::size_t>(classes.to_idx.at(rows[i].target))];
                    ++n_right;
                }
            }
            const std::size_t n_left = idx.size() - n_right;
            if (n_left < cfg.min_leaf || n_right < cfg.min_leaf) continue;
            std::vector<std::size_t> left_hist(hist);
            for (std::size_t c = 0; c < left_hist.size(); ++c) left_hist[c] -= right_hist[c];
            const double w_left = static_cast<double>(n_left) / static_cast<double>(idx.size());
            const double w_right = static_cast<double>(n_right) / static_cast<double>(idx.size());
            const double gain =
                parent_gini - w_left * gini(left_hist, n_left) - w_right * gini(right_hist, n_right);
            if (gain > best_gain) {
                best_gain = gain;
                best_cand = static_cast<int>(ci);
            }
        }
        if (best_cand < 0) return make_leaf(idx);

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx)
            (satisfies(candidates[static_cast<std::size_t>(best_cand)], rows[i]) ? right_idx
                                                                                 : left_idx)
                .push_back(i);

        TreeNode node;
        node.leaf = false;
        node.is_tag = candidates[static_cast<std::size_t>(best_cand)].is_tag;
        node.feature = candidates[static_cast<std::size_t>(best_cand)].feature;
        node.threshold = candidates[static_cast<std::size_t>(best_cand)].threshold;
        tree.nodes.push_back(std::move(node));
        const int me = static_cast<int>(tree.nodes.size() - 1);
        const int left = build(left_idx, depth + 1);
        const int right = build(right_idx, depth + 1);
        tree.nodes[static_cast<std::size_t>(me)].left = left;
        tree.nodes[static_cast<std::size_t>(me)].right = right;
        return me;
    }
};

}  // namespace

DecisionTree fit_tree_greedy(const std::vector<InterpretRow>& rows, const TreeConfig& cfg) {
    if (rows.empty()) throw InputError("cannot fit a tree on zero rows");
    ClassIndex classes(rows);
    auto candidates = build_candidates(rows, cfg.threshold_cap);
    GreedyBuilder builder{rows, candidates, cfg, classes, {}};
    builder.tree.class_labels = classes.labels;
    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    builder.build(all, 0);
    return std::move(builder.tree);
}

namespace {

struct BuildNode {
    int cand = -1;  // -1 = leaf
    int prediction = 0;
    std::vector<std::size_t> histogram;
    std::unique_ptr<BuildNode> left, right;
};

struct ExactResult {
    std::uint64_t cost = 0;
    int node_count = 0;
    std::vector<int> order;  // preorder candidate ids, -1 for leaves
    std::unique_ptr<BuildNode> tree;
};

// (cost, node_count, order) lexicographic
bool better(const ExactResult& a, const ExactResult& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.node_count != b.node_count) return a.node_count < b.node_count;
    return a.order < b.order;
}

struct ExactSearcher {
    const std::vector<InterpretRow>& rows;
    const std::vector<SplitCandidate>& candidates;
    const TreeConfig& cfg;
    const ClassIndex& classes;
    std::uint64_t work = 0;

    ExactResult leaf_result(const std::vector<std::size_t>& idx) {
        ExactResult res;
        auto node = std::make_unique<BuildNode>();
        node->histogram = histogram_of(rows, idx, classes);
        node->prediction = majority_of(node->histogram, classes);
        std::size_t best = 0;
        for (std::size_t c : node->histogram) best = std::max(best, c);
        res.cost = idx.size() - best;
        res.node_count = 1;
        res.order = {-1};
        res.tree = std::move(node);
        return res;
    }

    ExactResult search(const std::vector<std::size_t>& idx, int depth) {
        ExactResult best = leaf_result(idx);
        if (depth <= 0 || best.cost == 0 || idx.size() < 2 * cfg.min_leaf) return best;

        // drop candidates that replicate an earlier candidate's partition
        std::unordered_map<std::uint64_t, std::vector<std::pair<std::vector<bool>, std::size_t>>>
            seen;
        for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
            work += idx.size();
            if (work > cfg.work_budget)
                throw NumericError(
                    "exact tree search exceeded its work budget; use a smaller depth or a lower "
                    "threshold cap");

            std::vector<bool> mask(idx.size());
            std::size_t n_right = 0;
            std::uint64_t h = 1469598103934665603ull;
            for (std::size_t p = 0; p < idx.size(); ++p) {
                const bool s = satisfies(candidates[ci], rows[idx[p]]);
                mask[p] = s;
                n_right += s ? 1 : 0;
                h = (h ^ (s ? 0x9eu : 0x31u)) * 1099511628211ull;
            }
            const std::size_t n_left = idx.size() - n_right;
            if (n_left < cfg.min_leaf || n_right < cfg.min_leaf) continue;

            auto& bucket = seen[h];
            bool duplicate = false;
            for (const auto& [prev_mask, prev_ci] : bucket) {
                if (prev_mask == mask) {
                    duplicate = true;
                    break;
                }
            }
            if (duplicate) continue;
            bucket.emplace_back(mask, ci);

            std::vector<std::size_t> left_idx, right_idx;
            left_idx.reserve(n_left);
            right_idx.reserve(n_right);
            for (std::size_t p = 0; p < idx.size(); ++p)
                (mask[p] ? right_idx : left_idx).push_back(idx[p]);

            ExactResult lhs = search(left_idx, depth - 1);
            if (lhs.cost > best.cost) continue;  // strictly worse already
            ExactResult rhs = search(right_idx, depth - 1);

            ExactResult combined;
            combined.cost = lhs.cost + rhs.cost;
            combined.node_count = 1 + lhs.node_count + rhs.node_count;
            combined.order.reserve(1 + lhs.order.size() + rhs.order.size());
            combined.order.push_back(static_cast<int>(ci));
            combined.order.insert(combined.order.end(), lhs.order.begin(), lhs.order.end());
            combined.order.insert(combined.order.end(), rhs.order.begin(), rhs.order.end());
            auto node = std::make_unique<BuildNode>();
            node->cand = static_cast<int>(ci);
            node->left = std::move(lhs.tree);
            node->right = std::move(rhs.tree);
            combined.tree = std::move(node);
            if (better(combined, best)) best = std::move(combined);
        }
        return best;
    }
};

int emit_nodes(const BuildNode& src, const std::vector<SplitCandidate>& candidates,
               DecisionTree& tree) {
    TreeNode node;
    if (src.cand < 0) {
        node.leaf = true;
        node.prediction = src.prediction;
        node.histogram = src.histogram;
        tree.nodes.push_back(std::move(node));
        return static_cast<int>(tree.nodes.size() - 1);
    }
    node.leaf = false;
    node.is_tag = candidates[static_cast<std::size_t>(src.cand)].is_tag;
    node.feature = candidates[static_cast<std::size_t>(src.cand)].feature;
    node.threshold = candidates[static_cast<std::size_t>(src.cand)].threshold;
    tree.nodes.push_back(std::move(node));
    const int me = static_cast<int>(tree.nodes.size() - 1);
    const int left = emit_nodes(*src.left, candidates, tree);
    const int right = emit_nodes(*src.right, candidates, tree);
    tree.nodes[static_cast<std::size_t>(me)].left = left;
    tree.nodes[static_cast<std::size_t>(me)].right = right;
    return me;
}

}  // namespace

DecisionTree fit_tree_exact(const std::vector<InterpretRow>& rows, const TreeConfig& cfg) {
    if (rows.empty()) throw InputError("cannot fit a tree on zero rows");
    ClassIndex classes(rows);
    auto candidates = build_candidates(rows, cfg.threshold_cap);
    ExactSearcher searcher{rows, candidates, cfg, classes};
    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    ExactResult best = searcher.search(all, cfg.max_depth);

    DecisionTree tree;
    tree.class_labels = classes.labels;
    emit_nodes(*best.tree, candidates, tree);
    return tree;
}

int predict(const DecisionTree& tree, const InterpretRow& row) {
    int at = 0;
    while (!tree.nodes[static_cast<std::size_t>(at)].leaf) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
        SplitCandidate c{node.is_tag, node.feature, node.threshold};
        at = satisfies(c, row) ? node.right : node.left;
    }
    return tree.nodes[static_cast<std::size_t>(at)].prediction;
}

std::size_t misclassified(const DecisionTree& tree, const std::vector<InterpretRow>& rows) {
    std::size_t wrong = 0;
    for (const auto& r : rows)
        if (predict(tree, r) != r.target) ++wrong;
    return wrong;
}

double accuracy(const DecisionTree& tree, const std::vector<InterpretRow>& rows) {
    if (rows.empty()) return 0.0;
    return 1.0 - static_cast<double>(misclassified(tree, rows)) /
                     static_cast<double>(rows.size());
}

std::vector<std::vector<std::size_t>> rows_per_node(const DecisionTree& tree,
                                                    const std::vector<InterpretRow>& rows) {
    std::vector<std::vector<std::size_t>> routed(tree.nodes.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        int at = 0;
        routed[0].push_back(i);
        while (!tree.nodes[static_cast<std::size_t>(at)].leaf) {
            const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
            SplitCandidate c{node.is_tag, node.feature, node.threshold};
            at = satisfies(c, rows[i]) ? node.right : node.left;
            routed[static_cast<std::size_t>(at)].push_back(i);
        }
    }
    return routed;
}

std::size_t DecisionTree::leaf_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes) n += node.leaf ? 1 : 0;
    return n;
}

int DecisionTree::depth() const {
    std::vector<int> depth_of(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i].leaf) {
            depth_of[static_cast<std::size_t>(nodes[i].left)] = depth_of[i] + 1;
            depth_of[static_cast<std::size_t>(nodes[i].right)] = depth_of[i] + 1;
        }
        deepest = std::max(deepest, depth_of[i]);
    }
    return deepest;
}

std::string PathLiteral::render() const {
    if (is_tag) {
        std::string name = grouping_tag_names()[static_cast<std::size_t>(feature)];
        return tag_value ? name : "!" + name;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s %s %.6g",
                  numeric_feature_names()[static_cast<std::size_t>(feature)].c_str(),
                  is_upper ? "<=" : ">", bound);
    return buf;
}

namespace {

void collect_paths(const DecisionTree& tree, int at, std::vector<PathLiteral>& stack,
                   std::vector<DecisionPath>& out) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
    if (node.leaf) {
        // merge repeated features into their tightest form, keep first-seen order
        std::vector<PathLiteral> merged;
        std::map<int, std::size_t> tag_at;
        std::map<int, std::pair<std::size_t, std::size_t>> num_at;  // feature -> (<= pos, > pos)
        constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
        for (const auto& lit : stack) {
            if (lit.is_tag) {
                auto it = tag_at.find(lit.feature);
                if (it == tag_at.end()) {
                    tag_at.emplace(lit.feature, merged.size());
                    merged.push_back(lit);
                } else if (merged[it->second].tag_value != lit.tag_value) {
                    throw NumericError("contradictory tag literals on one tree path");
                }
            } else {
                auto [it, fresh] = num_at.try_emplace(lit.feature, none, none);
                auto& [upper_pos, lower_pos] = it->second;
                std::size_t& pos = lit.is_upper ? upper_pos : lower_pos;
                if (pos == none) {
                    pos = merged.size();
                    merged.push_back(lit);
                } else if (lit.is_upper) {
                    merged[pos].bound = std::min(merged[pos].bound, lit.bound);
                } else {
                    merged[pos].bound = std::max(merged[pos].bound, lit.bound);
                }
            }
        }
        out.push_back({at, node.prediction, std::move(merged)});
        return;
    }
    PathLiteral lit;
    lit.is_tag = node.is_tag;
    lit.feature = node.feature;
    // left violates the test, right satisfies it
    if (node.is_tag) {
        lit.tag_value = false;
        stack.push_back(lit);
        collect_paths(tree, node.left, stack, out);
        stack.back().tag_value = true;
        collect_paths(tree, node.right, stack, out);
    } else {
        lit.bound = node.threshold;
        lit.is_upper = false;  // left: value > threshold
        stack.push_back(lit);
        collect_paths(tree, node.left, stack, out);
        stack.back().is_upper = true;  // right: value <= threshold
        collect_paths(tree, node.right, stack, out);
    }
    stack.pop_back();
}

}  // namespace

std::vector<DecisionPath> decision_paths(const DecisionTree& tree) {
    std::vector<DecisionPath> out;
    std::vector<PathLiteral> stack;
    collect_paths(tree, 0, stack, out);
    return out;
}

DnfStructure dnf_for_cluster(const DecisionTree& tree, int cluster) {
    DnfStructure dnf;
    dnf.cluster = cluster;
    auto cls = std::find(tree.class_labels.begin(), tree.class_labels.end(), cluster);
    const std::size_t cls_idx = static_cast<std::size_t>(cls - tree.class_labels.begin());
    for (auto& path : decision_paths(tree)) {
        if (path.prediction != cluster) continue;
        const auto& hist = tree.nodes[static_cast<std::size_t>(path.leaf_node)].histogram;
        DnfDisjunct d;
        d.literals = std::move(path.literals);
        for (std::size_t c : hist) d.support += c;
        d.precision = d.support > 0 && cls != tree.class_labels.end()
                          ? static_cast<double>(hist[cls_idx]) / static_cast<double>(d.support)
                          : 0.0;
        dnf.disjuncts.push_back(std::move(d));
    }
    return dnf;
}

namespace {

void render_node(const DecisionTree& tree, int at, int depth, std::string& out) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
    std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
    if (node.leaf) {
        std::size_t n = 0;
        for (std::size_t c : node.histogram) n += c;
        out += indent + "-> cluster " + std::to_string(node.prediction) + " (n=" +
               std::to_string(n) + ")\n";
        return;
    }
    std::string test;
    if (node.is_tag) {
        test = grouping_tag_names()[static_cast<std::size_t>(node.feature)];
    } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s <= %.6g",
                      numeric_feature_names()[static_cast<std::size_t>(node.feature)].c_str(),
                      node.threshold);
        test = buf;
    }
    out += indent + test + "?\n";
    out += indent + "yes:\n";
    render_node(tree, node.right, depth + 1, out);
    out += indent + "no:\n";
    render_node(tree, node.left, depth + 1, out);
}

}  // namespace

std::string render_tree(const DecisionTree& tree) {
    std::string out;
    render_node(tree, 0, 0, out);
    return out;
}

std::string tree_to_json(const DecisionTree& tree) {
    nlohmann::json j;
    j["format"] = "darknet-tree-v1";
    j["class_labels"] = tree.class_labels;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        nlohmann::json jn;
        jn["leaf"] = n.leaf;
        if (n.leaf) {
            jn["prediction"] = n.prediction;
            jn["histogram"] = n.histogram;
        } else {
            jn["kind"] = n.is_tag ? "tag" : "numeric";
            jn["feature"] = n.is_tag
                                ? std::string(grouping_tag_names()[static_cast<std::size_t>(n.feature)])
                                : numeric_feature_names()[static_cast<std::size_t>(n.feature)];
            if (!n.is_tag) jn["threshold"] = n.threshold;
            jn["left"] = n.left;
            jn["right"] = n.right;
        }
        nodes.push_back(std::move(jn));
    }
    return j.dump(2);
}

DecisionTree tree_from_json(const std::string& serialized) {
    nlohmann::json j = nlohmann::json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-tree-v1")
        throw InputError("not a recognizable tree file");
    DecisionTree tree;
    tree.class_labels = j.at("class_labels").get<std::vector<int>>();
    for (const auto& jn : j.at("nodes")) {
        TreeNode n;
        n.leaf = jn.at("leaf").get<bool>();
        if (n.leaf) {
            n.prediction = jn.at("prediction").get<int>();
            n.histogram = jn.at("histogram").get<std::vector<std::size_t>>();
        } else {
            n.is_tag = jn.at("kind").get<std::string>() == "tag";
            const auto name = jn.at("feature").get<std::string>();
            if (n.is_tag) {
                const auto& names = grouping_tag_names();
                auto it = std::find_if(names.begin(), names.end(),
                                       [&](const char* s) { return name == s; });
                if (it == names.end()) throw InputError("tree file: unknown tag " + name);
                n.feature = static_cast<int>(it - names.begin());
            } else {
                const auto& names = numeric_feature_names();
                auto it = std::find(names.begin(), names.end(), name);
                if (it == names.end()) throw InputError("tree file: unknown feature " + name);
                n.feature = static_cast<int>(it - names.begin());
                n.threshold = jn.at("threshold").get<double>();
            }
            n.left = jn.at("left").get<int>();
            n.right = jn.at("right").get<int>();
        }
        tree.nodes.push_back(std::move(n));
    }
    if (tree.nodes.empty()) throw InputError("tree file has no nodes");
    return tree;
}

std::vector<ClusterReportRow> cluster_report(const std::vector<int>& labels,
                                             const std::vector<ScannerProfile>& profiles,
                                             int topk) {
    if (labels.size() != profiles.size())
        throw InputError("labels do not align with profiles");
    std::map<int, std::vector<const ScannerProfile*>> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
        members[labels[i]].push_back(&profiles[i]);

    std::vector<ClusterReportRow> rows;
    for (const auto& [cluster, profs] : members) {
        ClusterReportRow row;
        row.cluster = cluster;
        row.size = profs.size();
        std::map<std::uint16_t, std::size_t> port_counts;
        std::map<std::string, std::size_t> tag_counts, country_counts, asn_counts;
        std::size_t mirai = 0;
        for (const ScannerProfile* p : profs) {
            for (auto port : p->ports) ++port_counts[port];
            for (const auto& tag : p->censys_tags) ++tag_counts[tag];
            ++country_counts[p->country];
            ++asn_counts[p->asn];
            if (p->mirai) ++mirai;
        }
        row.mirai_coverage = static_cast<double>(mirai) / static_cast<double>(row.size);

        auto take_top = [&](auto& counts, auto& out) {
            using Entry = std::pair<typename std::decay_t<decltype(counts)>::key_type, std::size_t>;
            std::vector<Entry> ranked(counts.begin(), counts.end());
            std::stable_sort(ranked.begin(), ranked.end(), [](const Entry& a, const Entry& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
            for (const auto& [key, cnt] : ranked) {
                if (static_cast<int>(out.size()) >= topk) break;
                out.emplace_back(key, cnt);
            }
        };
        std::vector<std::pair<std::uint16_t, std::size_t>> top_ports_raw;
        std::vector<std::pair<std::string, std::size_t>> top_tags_raw;
        take_top(port_counts, top_ports_raw);
        take_top(tag_counts, top_tags_raw);
        take_top(country_counts, row.top_countries);
        take_top(asn_counts, row.top_asns);
        for (const auto& [port, cnt] : top_ports_raw)
            row.top_ports.emplace_back(port,
                                       static_cast<double>(cnt) / static_cast<double>(row.size));
        for (const auto& [tag, cnt] : top_tags_raw)
            row.top_tags.emplace_back(tag,
                                      static_cast<double>(cnt) / static_cast<double>(row.size));
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.size != b.size) return a.size > b.size;
        return a.cluster < b.cluster;
    });
    return rows;
}

}  // namespace darknet
