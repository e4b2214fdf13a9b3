#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "darknet/features.hpp"
#include "darknet/ingest.hpp"
#include "darknet/io.hpp"
#include "darknet/rng.hpp"
#include "darknet/common.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace darknet;
using namespace testutil;
using namespace tcpflag;

namespace {

ScannerProfile simple_profile(const std::string& ip, std::set<std::uint16_t> ports,
                              std::uint64_t packets = 10) {
    ScannerProfile p;
    p.src_ip = parse_ipv4(ip);
    p.total_packets = packets;
    p.total_bytes = packets * 40;
    p.total_lifetime = 100;
    p.ports = std::move(ports);
    p.num_ports = p.ports.size();
    p.avg_lifetime = 100;
    p.avg_packet_size = 40;
    p.protocols = {"SYN"};
    p.min_unique_dsts = p.max_unique_dsts = packets;
    p.min_unique_dst24 = p.max_unique_dst24 = 1;
    return p;
}

}  // namespace

TEST_CASE("daily aggregation sums, sets and min/max") {
    Annotations ann;
    ann.geo.add("1.0.0.0/8", "EG");
    ann.censys[parse_ipv4("1.1.1.1")] = CensysRecord{parse_ipv4("1.1.1.1"), {443}, {"cwmp"}};

    // one source, two events: 10 packets/4000 bytes with 5 dsts, then 50 dsts
    std::vector<PacketRecord> packets;
    for (int i = 0; i < 10; ++i) {
        auto pkt = tcp_packet(1000 + i * 10, "1.1.1.1", "100.64.0." + std::to_string(i % 5), 23,
                              SYN, 1, 400);
        packets.push_back(pkt);
    }
    for (int i = 0; i < 50; ++i)
        packets.push_back(tcp_packet(5000 + i, "1.1.1.1",
                                     "100.64." + std::to_string(i) + ".9", 2323, SYN, 1, 40));
    auto events = ingest(packets);
    REQUIRE(events.size() == 2);
    auto profiles = aggregate_daily(events, ann);
    REQUIRE(profiles.size() == 1);
    const auto& p = profiles[0];
    CHECK(p.total_packets == 60);
    CHECK(p.avg_packet_size == doctest::Approx((4000.0 + 2000.0) / 60.0));
    CHECK(p.num_ports == 2);
    CHECK(p.ports == std::set<std::uint16_t>{23, 2323});
    CHECK(p.min_unique_dsts == 5);
    CHECK(p.max_unique_dsts == 50);
    CHECK(p.country == "EG");
    CHECK(p.asn == "AS0");
    CHECK(p.censys_tags == std::set<std::string>{"cwmp"});
    CHECK(p.grouping.censys_mgmt);
    CHECK(p.grouping.darknet_remote);
    CHECK(p.class_mix.at(TrafficClass::Scanning) == 60);
    CHECK(p.total_lifetime >= p.avg_lifetime);

    // single-event arithmetic
    auto single = aggregate_daily(
        ingest({tcp_packet(0, "2.2.2.2", "100.64.0.1", 23, SYN, 1, 400),
                tcp_packet(1, "2.2.2.2", "100.64.0.2", 23, SYN, 1, 400)}),
        ann);
    REQUIRE(single.size() == 1);
    CHECK(single[0].avg_packet_size == doctest::Approx(400.0));

    CHECK(aggregate_daily({}, ann).empty());
}

TEST_CASE("schema ranks by distinct sources with ascending tie-break") {
    std::vector<ScannerProfile> profiles;
    // port 23 on 3 sources, 445 on 2, 80 on 1
    profiles.push_back(simple_profile("1.1.1.1", {23, 445}));
    profiles.push_back(simple_profile("1.1.1.2", {23, 445}));
    profiles.push_back(simple_profile("1.1.1.3", {23, 80}));
    auto schema = build_schema(profiles, 2);
    CHECK(schema.top_ports == std::vector<std::uint16_t>{23, 445});

    // tie between 23 and 445 resolved to the smaller port
    profiles.clear();
    profiles.push_back(simple_profile("1.1.1.1", {23}));
    profiles.push_back(simple_profile("1.1.1.2", {445}));
    schema = build_schema(profiles, 1);
    CHECK(schema.top_ports == std::vector<std::uint16_t>{23});

    // u larger than the vocabulary keeps everything
    schema = build_schema(profiles, 5);
    CHECK(schema.top_ports == std::vector<std::uint16_t>{23, 445});

    CHECK_THROWS_AS(build_schema({}, 10), InputError);
    CHECK_THROWS_AS(build_schema(profiles, 0), InputError);
}

TEST_CASE("one-hot vectorization with other-bucket") {
    std::vector<ScannerProfile> profiles = {simple_profile("1.1.1.1", {23}),
                                            simple_profile("1.1.1.2", {445})};
    auto schema = build_schema(profiles, 2);
    REQUIRE(schema.top_ports == std::vector<std::uint16_t>{23, 445});
    const std::size_t port_block = kNumericFeatureCount;

    auto row = vectorize(simple_profile("9.9.9.9", {23}), schema);
    CHECK(row[port_block + 0] == 1.0);
    CHECK(row[port_block + 1] == 0.0);
    CHECK(row[port_block + 2] == 0.0);  // other

    row = vectorize(simple_profile("9.9.9.9", {9999}), schema);
    CHECK(row[port_block + 0] == 0.0);
    CHECK(row[port_block + 1] == 0.0);
    CHECK(row[port_block + 2] == 1.0);

    // no censys -> censys blocks all zero
    const std::size_t width = schema.width();
    for (std::size_t c = port_block + 3 + 2; c < width; ++c) CHECK(row[c] == 0.0);

    // one-hot block sums: |set ∩ top-u| + other indicator
    row = vectorize(simple_profile("9.9.9.9", {23, 445, 9999}), schema);
    double sum = row[port_block] + row[port_block + 1] + row[port_block + 2];
    CHECK(sum == doctest::Approx(3.0));
}

TEST_CASE("numeric transform is log1p + min-max against the schema") {
    std::vector<ScannerProfile> profiles = {simple_profile("1.1.1.1", {23}, 10),
                                            simple_profile("1.1.1.2", {23}, 1000)};
    auto schema = build_schema(profiles, 2);
    auto lo = vectorize(profiles[0], schema);
    auto hi = vectorize(profiles[1], schema);
    CHECK(lo[0] == doctest::Approx(0.0));
    CHECK(hi[0] == doctest::Approx(1.0));
    auto mid = simple_profile("1.1.1.3", {23}, 100);
    auto row = vectorize(mid, schema);
    const double expected = (std::log1p(100.0) - std::log1p(10.0)) /
                            (std::log1p(1000.0) - std::log1p(10.0));
    CHECK(row[0] == doctest::Approx(expected));
    // out-of-range values clamp instead of extrapolating
    auto big = vectorize(simple_profile("1.1.1.4", {23}, 50000), schema);
    CHECK(big[0] == 1.0);
}

TEST_CASE("geometric bin edges") {
    std::vector<double> values;
    for (int i = 0; i <= 10; ++i) values.push_back(std::pow(2.0, i));  // 1..1024
    auto bins = fit_feature_bins(values, 10);
    REQUIRE(bins.edges.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(bins.edges[i] == doctest::Approx(std::pow(2.0, i)));
    CHECK_FALSE(bins.degenerate);

    auto degenerate = fit_feature_bins({5, 5, 5}, 10);
    CHECK(degenerate.degenerate);
    CHECK(degenerate.edges.size() == 1);

    // mass concentrated at 1-2 ports: the first edges isolate that mass
    std::vector<double> ports;
    for (int i = 0; i < 70; ++i) ports.push_back(1 + i % 2);
    for (int i = 0; i < 30; ++i) ports.push_back(10 + i * 30);
    bins = fit_feature_bins(ports, 10);
    CHECK(bins.edges[0] == doctest::Approx(1.0));
    CHECK(bins.edges[1] < 3.0);
}

TEST_CASE("thermometer bits are a monotone prefix of ones") {
    const std::vector<double> edges = {1, 2, 4, 8};
    CHECK(thermometer(5, edges) == std::vector<std::uint8_t>{1, 1, 1, 0});
    CHECK(thermometer(0.5, edges) == std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(thermometer(8, edges) == std::vector<std::uint8_t>{1, 1, 1, 1});
    CHECK(thermometer(-3, edges) == std::vector<std::uint8_t>{0, 0, 0, 0});

    Rng rng(11);
    double prev_value = -1;
    std::size_t prev_ones = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const double v = rng.uniform(0.0, 10.0);
        auto bits = thermometer(v, edges);
        // no holes
        bool seen_zero = false;
        std::size_t ones = 0;
        for (auto b : bits) {
            if (b == 0) seen_zero = true;
            else {
                CHECK_FALSE(seen_zero);
                ++ones;
            }
        }
        // monotone in the value
        if (prev_value >= 0 && v >= prev_value) CHECK(ones >= prev_ones);
        if (v >= prev_value) {
            prev_value = v;
            prev_ones = ones;
        }
    }
}

TEST_CASE("thermometer mode produces an all-binary matrix") {
    std::vector<ScannerProfile> profiles;
    Rng rng(3);
    for (int i = 0; i < 40; ++i) {
        auto p = simple_profile("1.1.2." + std::to_string(i), {static_cast<std::uint16_t>(20 + i % 7)},
                                1 + rng.below(5000));
        profiles.push_back(p);
    }
    auto schema = build_schema(profiles, 5, EncodingMode::Thermometer, 10);
    auto fm = vectorize_all(profiles, schema);
    CHECK(fm.cols() == schema.width());
    for (double v : fm.values.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("vectorize separates profiles differing in schema-covered attributes") {
    std::vector<ScannerProfile> profiles = {simple_profile("1.1.1.1", {23}),
                                            simple_profile("1.1.1.2", {445})};
    auto schema = build_schema(profiles, 2);
    auto a = vectorize(profiles[0], schema);
    auto b = vectorize(profiles[1], schema);
    CHECK(a != b);
    auto c = vectorize(profiles[0], schema);
    CHECK(a == c);
}

TEST_CASE("schema sample agreement on clearly-top values") {
    Rng rng(17);
    std::vector<ScannerProfile> full;
    for (int i = 0; i < 400; ++i) {
        std::set<std::uint16_t> ports = {23};  // universally popular
        if (rng.below(4) == 0) ports.insert(445);
        if (rng.below(8) == 0) ports.insert(static_cast<std::uint16_t>(1000 + rng.below(500)));
        full.push_back(simple_profile(format_ipv4(0x01010000u + i), ports));
    }
    std::vector<ScannerProfile> sample(full.begin(), full.begin() + 200);
    auto schema_full = build_schema(full, 2);
    auto schema_sample = build_schema(sample, 2);
    // port 23 dominates both rankings
    CHECK(schema_full.top_ports.front() == 23);
    CHECK(schema_sample.top_ports.front() == 23);
}

TEST_CASE("schema json sidecar round trip preserves the fingerprint") {
    TempDir dir("schema");
    std::vector<ScannerProfile> profiles = {simple_profile("1.1.1.1", {23}, 10),
                                            simple_profile("1.1.1.2", {445}, 500)};
    auto schema = build_schema(profiles, 2);
    write_file_atomic(dir.file("schema.json"), schema_to_json(schema));
    auto loaded = schema_from_json(read_file(dir.file("schema.json")));
    CHECK(loaded.fingerprint() == schema.fingerprint());
    CHECK(loaded.column_names() == schema.column_names());
    CHECK(vectorize(profiles[0], loaded) == vectorize(profiles[0], schema));
}
