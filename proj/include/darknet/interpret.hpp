#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "darknet/enrich.hpp"
#include "darknet/features.hpp"
#include "darknet/profile.hpp"

namespace darknet {

// Numeric behavioral features plus the interpretation grouping booleans,
// labeled with the cluster the scanner landed in.
struct InterpretRow {
    std::array<double, kNumericFeatureCount> numeric{};
    std::array<bool, kGroupingTagCount> tags{};
    int target = 0;
};

std::vector<InterpretRow> make_interpret_rows(const std::vector<ScannerProfile>& profiles,
                                              const std::vector<int>& labels);

struct TreeNode {
    bool leaf = true;
    // internal nodes; right child satisfies the test, left violates it
    bool is_tag = false;
    int feature = -1;        // tag index or numeric index
    double threshold = 0.0;  // numeric tests: satisfied when value <= threshold
    int left = -1;
    int right = -1;
    // leaves
    int prediction = 0;
    std::vector<std::size_t> histogram;  // per class_labels entry
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::vector<int> class_labels;

    std::size_t leaf_count() const;
    int depth() const;
};

struct TreeConfig {
    int max_depth = 3;
    std::size_t min_leaf = 10;
    // numeric candidate thresholds per feature; 0 keeps every midpoint
    int threshold_cap = 32;
    // exact-search guard, counted in row-partition operations
    std::uint64_t work_budget = 100'000'000;
};

struct SplitCandidate {
    bool is_tag = false;
    int feature = 0;
    double threshold = 0.0;
};

// Tags first, then numeric features with ascending thresholds. This order is
// also the tie-break order of the exact search.
std::vector<SplitCandidate> build_candidates(const std::vector<InterpretRow>& rows,
                                             int threshold_cap);

// Recursive best-Gini-gain splitting; stops on depth, min_leaf or zero gain.
DecisionTree fit_tree_greedy(const std::vector<InterpretRow>& rows, const TreeConfig& cfg);

// Exhaustive depth-bounded search minimizing misclassification count; ties
// broken by fewer nodes, then earliest split sequence. Throws NumericError
// when the work budget is exhausted (use a smaller depth or threshold cap).
DecisionTree fit_tree_exact(const std::vector<InterpretRow>& rows, const TreeConfig& cfg);

int predict(const DecisionTree& tree, const InterpretRow& row);
std::size_t misclassified(const DecisionTree& tree, const std::vector<InterpretRow>& rows);
double accuracy(const DecisionTree& tree, const std::vector<InterpretRow>& rows);

// Row indices routed through every node (index = node id).
std::vector<std::vector<std::size_t>> rows_per_node(const DecisionTree& tree,
                                                    const std::vector<InterpretRow>& rows);

struct PathLiteral {
    bool is_tag = false;
    int feature = 0;
    bool tag_value = false;  // tag literals
    bool is_upper = false;   // numeric: true -> (value <= bound), false -> (value > bound)
    double bound = 0.0;

    std::string render() const;
};

struct DecisionPath {
    int leaf_node = 0;
    int prediction = 0;
    std::vector<PathLiteral> literals;  // root-to-leaf order, per-feature merged
};

std::vector<DecisionPath> decision_paths(const DecisionTree& tree);

struct DnfDisjunct {
    std::vector<PathLiteral> literals;
    std::size_t support = 0;   // training rows routed to the leaf
    double precision = 0.0;    // fraction of routed rows truly in the cluster
};

struct DnfStructure {
    int cluster = 0;
    std::vector<DnfDisjunct> disjuncts;  // empty when the cluster won no leaf
};

DnfStructure dnf_for_cluster(const DecisionTree& tree, int cluster);

std::string render_tree(const DecisionTree& tree);
std::string tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const std::string& serialized);

struct ClusterReportRow {
    int cluster = 0;
    std::size_t size = 0;
    std::vector<std::pair<std::uint16_t, double>> top_ports;      // (port, member fraction)
    std::vector<std::pair<std::string, double>> top_tags;         // censys tags
    double mirai_coverage = 0.0;
    std::vector<std::pair<std::string, std::size_t>> top_countries;
    std::vector<std::pair<std::string, std::size_t>> top_asns;
};

// Per-cluster summary, rows sorted by size descending. labels[i] belongs to
// profiles[i].
std::vector<ClusterReportRow> cluster_report(const std::vector<int>& labels,
                                             const std::vector<ScannerProfile>& profiles,
                                             int topk = 3);

}  // namespace darknet
