#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "darknet/interpret.hpp"
#include "darknet/rng.hpp"
#include "darknet/common.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace darknet;

namespace {

InterpretRow tag_row(std::initializer_list<std::size_t> set_tags, int target) {
    InterpretRow row;
    for (std::size_t t : set_tags) row.tags[t] = true;
    row.target = target;
    return row;
}

std::vector<InterpretRow> replicate(const std::vector<InterpretRow>& rows, std::size_t copies) {
    std::vector<InterpretRow> out;
    for (std::size_t c = 0; c < copies; ++c) out.insert(out.end(), rows.begin(), rows.end());
    return out;
}

// tags 0 and 1 XOR-label the target
std::vector<InterpretRow> xor_rows(std::size_t copies) {
    return replicate({tag_row({}, 0), tag_row({0}, 1), tag_row({1}, 1), tag_row({0, 1}, 0)},
                     copies);
}

}  // namespace

TEST_CASE("greedy tree nails a single separating tag") {
    auto rows = replicate({tag_row({13}, 1), tag_row({}, 0)}, 25);
    TreeConfig cfg;
    cfg.max_depth = 1;
    auto tree = fit_tree_greedy(rows, cfg);
    CHECK(accuracy(tree, rows) == doctest::Approx(1.0));
    CHECK(tree.depth() == 1);
}

TEST_CASE("degenerate inputs collapse to a majority leaf with low-label ties") {
    std::vector<InterpretRow> rows = replicate({tag_row({}, 2), tag_row({}, 5)}, 20);
    TreeConfig cfg;
    auto tree = fit_tree_greedy(rows, cfg);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].leaf);
    CHECK(tree.nodes[0].prediction == 2);  // tie broken toward the lowest cluster label

    // single class: single leaf
    auto pure = fit_tree_greedy(replicate({tag_row({1}, 7)}, 30), cfg);
    REQUIRE(pure.nodes.size() == 1);
    CHECK(pure.nodes[0].prediction == 7);
}

TEST_CASE("greedy is blind to XOR at depth 1 while exact depth 2 solves it") {
    auto rows = xor_rows(25);  // 100 rows
    TreeConfig cfg;
    cfg.max_depth = 1;
    auto greedy1 = fit_tree_greedy(rows, cfg);
    REQUIRE(greedy1.nodes.size() == 1);  // zero gain everywhere -> single leaf

    cfg.max_depth = 2;
    auto greedy2 = fit_tree_greedy(rows, cfg);
    CHECK(accuracy(greedy2, rows) <= 0.75);

    auto exact2 = fit_tree_exact(rows, cfg);
    CHECK(accuracy(exact2, rows) == doctest::Approx(1.0));
}

TEST_CASE("exact search is never worse than greedy at equal depth and candidates") {
    Rng rng(41);
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<InterpretRow> rows;
        for (int i = 0; i < 160; ++i) {
            InterpretRow row;
            for (std::size_t t = 0; t < 6; ++t) row.tags[t] = rng.below(2) == 1;
            row.numeric[0] = static_cast<double>(rng.below(40));
            row.numeric[3] = static_cast<double>(rng.below(5));
            row.target = static_cast<int>((row.tags[0] ? 2 : 0) + (row.numeric[0] > 17 ? 1 : 0) +
                                          rng.below(2));
            rows.push_back(row);
        }
        TreeConfig cfg;
        cfg.max_depth = 2;
        cfg.threshold_cap = 8;
        auto exact = fit_tree_exact(rows, cfg);
        auto greedy = fit_tree_greedy(rows, cfg);
        CHECK(misclassified(exact, rows) <= misclassified(greedy, rows));
    }
}

TEST_CASE("exact depth 0 yields the majority leaf") {
    auto rows = xor_rows(10);
    TreeConfig cfg;
    cfg.max_depth = 0;
    auto tree = fit_tree_exact(rows, cfg);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].leaf);
    CHECK(tree.nodes[0].prediction == 0);
}

TEST_CASE("exact search honors its work budget") {
    Rng rng(43);
    std::vector<InterpretRow> rows;
    for (int i = 0; i < 400; ++i) {
        InterpretRow row;
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j)
            row.numeric[j] = rng.uniform(0.0, 100.0);
        row.target = static_cast<int>(rng.below(6));
        rows.push_back(row);
    }
    TreeConfig cfg;
    cfg.max_depth = 3;
    cfg.work_budget = 20000;
    CHECK_THROWS_AS(fit_tree_exact(rows, cfg), NumericError);
}

TEST_CASE("leaves partition the training rows") {
    Rng rng(47);
    std::vector<InterpretRow> rows;
    for (int i = 0; i < 200; ++i) {
        InterpretRow row;
        row.tags[2] = rng.below(2) == 1;
        row.numeric[1] = rng.uniform(0.0, 10.0);
        row.target = row.tags[2] ? 1 : (row.numeric[1] > 5 ? 2 : 3);
        rows.push_back(row);
    }
    TreeConfig cfg;
    auto tree = fit_tree_greedy(rows, cfg);
    auto routed = rows_per_node(tree, rows);
    std::vector<bool> seen(rows.size(), false);
    for (std::size_t node = 0; node < tree.nodes.size(); ++node) {
        if (!tree.nodes[node].leaf) continue;
        std::size_t hist_total = 0;
        for (std::size_t c : tree.nodes[node].histogram) hist_total += c;
        CHECK(hist_total == routed[node].size());
        for (std::size_t i : routed[node]) {
            CHECK_FALSE(seen[i]);  // leaves are disjoint
            seen[i] = true;
        }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST_CASE("decision paths merge repeated numeric literals to the tightest interval") {
    // hand-built tree: x0 <= 5 then x0 <= 3
    DecisionTree tree;
    tree.class_labels = {0, 1};
    TreeNode root;
    root.leaf = false;
    root.feature = 0;
    root.threshold = 5.0;
    root.left = 1;
    root.right = 2;
    TreeNode leaf_hi;
    leaf_hi.leaf = true;
    leaf_hi.prediction = 0;
    leaf_hi.histogram = {4, 0};
    TreeNode inner;
    inner.leaf = false;
    inner.feature = 0;
    inner.threshold = 3.0;
    inner.left = 3;
    inner.right = 4;
    TreeNode leaf_mid;
    leaf_mid.leaf = true;
    leaf_mid.prediction = 0;
    leaf_mid.histogram = {2, 1};
    TreeNode leaf_lo;
    leaf_lo.leaf = true;
    leaf_lo.prediction = 1;
    leaf_lo.histogram = {1, 5};
    tree.nodes = {root, leaf_hi, inner, leaf_mid, leaf_lo};

    auto paths = decision_paths(tree);
    REQUIRE(paths.size() == 3);
    // deepest right-right path: (x0 <= 5) AND (x0 <= 3) merged to one literal
    const auto& deep = paths[2];
    REQUIRE(deep.literals.size() == 1);
    CHECK(deep.literals[0].is_upper);
    CHECK(deep.literals[0].bound == doctest::Approx(3.0));
    // middle path keeps both sides of the interval: > 3 and <= 5
    const auto& mid = paths[1];
    REQUIRE(mid.literals.size() == 2);
    CHECK(mid.literals[0].is_upper);
    CHECK(mid.literals[0].bound == doctest::Approx(5.0));
    CHECK_FALSE(mid.literals[1].is_upper);
    CHECK(mid.literals[1].bound == doctest::Approx(3.0));

    // single-leaf tree carries the empty conjunction
    DecisionTree leaf_only;
    leaf_only.class_labels = {0};
    TreeNode only;
    only.leaf = true;
    only.histogram = {3};
    leaf_only.nodes = {only};
    auto trivial = decision_paths(leaf_only);
    REQUIRE(trivial.size() == 1);
    CHECK(trivial[0].literals.empty());
}

TEST_CASE("dnf structures carry per-disjunct support and precision") {
    auto rows = xor_rows(25);
    TreeConfig cfg;
    cfg.max_depth = 2;
    auto tree = fit_tree_exact(rows, cfg);
    for (int cluster : {0, 1}) {
        auto dnf = dnf_for_cluster(tree, cluster);
        REQUIRE_FALSE(dnf.disjuncts.empty());
        std::size_t support = 0;
        for (const auto& d : dnf.disjuncts) {
            support += d.support;
            CHECK(d.precision == doctest::Approx(1.0));  // XOR splits cleanly
        }
        CHECK(support == 50);  // half the rows per class

        // supports sum to the rows predicted as that cluster
        std::size_t predicted = 0;
        for (const auto& row : rows)
            if (predict(tree, row) == cluster) ++predicted;
        CHECK(support == predicted);
    }

    auto missing = dnf_for_cluster(tree, 99);
    CHECK(missing.disjuncts.empty());
}

TEST_CASE("tree json round trip preserves predictions") {
    auto rows = xor_rows(25);
    TreeConfig cfg;
    cfg.max_depth = 2;
    auto tree = fit_tree_exact(rows, cfg);
    auto loaded = tree_from_json(tree_to_json(tree));
    for (const auto& row : rows) CHECK(predict(tree, row) == predict(loaded, row));
    CHECK_THROWS_AS(tree_from_json("{}"), InputError);
    CHECK_FALSE(render_tree(tree).empty());
}

namespace {

ScannerProfile report_profile(const std::string& ip, std::set<std::uint16_t> ports, bool mirai,
                              const std::string& country, std::set<std::string> tags = {}) {
    ScannerProfile p;
    p.src_ip = parse_ipv4(ip);
    p.total_packets = 10;
    p.total_bytes = 400;
    p.ports = std::move(ports);
    p.num_ports = p.ports.size();
    p.mirai = mirai;
    p.country = country;
    p.asn = "AS1";
    p.censys_tags = std::move(tags);
    return p;
}

}  // namespace

TEST_CASE("cluster report fractions match direct counting") {
    std::vector<ScannerProfile> profiles;
    std::vector<int> labels;
    // cluster 0: 8 members scanning 445 (7 of them), 23 (1); 6 with the mirai flag
    for (int i = 0; i < 8; ++i) {
        profiles.push_back(report_profile("1.0.0." + std::to_string(i),
                                          {i < 7 ? std::uint16_t(445) : std::uint16_t(23)}, i < 6,
                                          i < 5 ? "EG" : "IN", {"smb"}));
        labels.push_back(0);
    }
    // cluster 1: one member
    profiles.push_back(report_profile("2.0.0.1", {80}, false, "US", {"http"}));
    labels.push_back(1);

    auto report = cluster_report(labels, profiles, 3);
    REQUIRE(report.size() == 2);
    CHECK(report[0].cluster == 0);  // sorted by size descending
    CHECK(report[0].size == 8);
    REQUIRE_FALSE(report[0].top_ports.empty());
    CHECK(report[0].top_ports[0].first == 445);
    CHECK(report[0].top_ports[0].second == doctest::Approx(7.0 / 8.0));
    CHECK(report[0].mirai_coverage == doctest::Approx(6.0 / 8.0));
    CHECK(report[0].top_countries[0].first == "EG");
    CHECK(report[0].top_tags[0].first == "smb");
    CHECK(report[0].top_tags[0].second == doctest::Approx(1.0));

    // singleton cluster: all fractions in {0, 1}
    CHECK(report[1].size == 1);
    for (const auto& [port, fraction] : report[1].top_ports)
        CHECK((fraction == 0.0 || fraction == 1.0));
    CHECK(report[1].mirai_coverage == 0.0);
}
