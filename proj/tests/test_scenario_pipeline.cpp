#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <set>

#include "darknet/ingest.hpp"
#include "darknet/io.hpp"
#include "darknet/pipeline.hpp"
#include "darknet/scenario.hpp"
#include "darknet/common.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace darknet;
using namespace testutil;

namespace {

ScenarioSpec small_spec(std::uint64_t seed) {
    ScenarioSpec spec;
    spec.days = 3;
    spec.seed = seed;
    spec.population = {{Archetype::MiraiTelnet, 8},
                       {Archetype::SmbWorm, 20},
                       {Archetype::CwmpSsh, 20},
                       {Archetype::DnsAmp, 20},
                       {Archetype::EphemeralUdpSpray, 20}};
    return spec;
}

PipelineConfig small_pipeline(const GeneratedScenario& gen, const std::string& out_dir) {
    PipelineConfig cfg;
    cfg.packet_files = gen.packet_files;
    cfg.geo_file = gen.geo_file;
    cfg.asn_file = gen.asn_file;
    cfg.censys_file = gen.censys_file;
    cfg.external_labels = gen.truth_file;
    cfg.out_dir = out_dir;
    cfg.u = 30;
    cfg.mlp.latent_dim = 8;
    cfg.mlp.hidden_dims = {32};
    cfg.mlp.epochs = 15;
    cfg.mlp.batch_size = 64;
    cfg.k = 5;
    cfg.tree_mode = "greedy";
    cfg.seed = 4242;
    return cfg;
}

}  // namespace

TEST_CASE("scenario generation is deterministic and labeled") {
    TempDir dir("scenario");
    auto spec = small_spec(77);
    auto a = generate_scenario(spec, dir.file("a"));
    auto b = generate_scenario(spec, dir.file("b"));
    REQUIRE(a.packet_files.size() == 3);
    for (std::size_t d = 0; d < 3; ++d)
        CHECK(read_file(a.packet_files[d]) == read_file(b.packet_files[d]));
    CHECK(read_file(a.truth_file) == read_file(b.truth_file));
    CHECK(read_file(a.censys_file) == read_file(b.censys_file));

    // every scanner appears in the ground truth with its archetype
    auto truth = read_ground_truth(a.truth_file);
    auto packets = read_packets(a.packet_files[0]);
    std::set<std::string> day1_sources;
    for (const auto& pkt : packets) day1_sources.insert(format_ipv4(pkt.src_ip));
    std::set<std::string> day1_truth;
    for (const auto& row : truth)
        if (row.day == a.day_labels[0]) day1_truth.insert(row.src_ip);
    CHECK(day1_sources == day1_truth);
}

TEST_CASE("mirai archetype carries the fingerprint on every tcp probe") {
    TempDir dir("mirai");
    auto spec = small_spec(5);
    auto gen = generate_scenario(spec, dir.path());
    auto truth = read_ground_truth(gen.truth_file);
    std::set<std::string> mirai_ips;
    for (const auto& row : truth)
        if (row.archetype == "MiraiTelnet") mirai_ips.insert(row.src_ip);
    REQUIRE_FALSE(mirai_ips.empty());
    std::size_t mirai_packets = 0;
    for (const auto& path : gen.packet_files) {
        for (const auto& pkt : read_packets(path)) {
            if (mirai_ips.count(format_ipv4(pkt.src_ip))) {
                REQUIRE(pkt.protocol == Protocol::TCP);
                CHECK(mirai_fingerprint(pkt));
                ++mirai_packets;
            }
        }
    }
    CHECK(mirai_packets > 0);
}

TEST_CASE("packet streams are time ordered and well formed") {
    TempDir dir("order");
    auto gen = generate_scenario(small_spec(9), dir.path());
    for (const auto& path : gen.packet_files) {
        auto packets = read_packets(path);
        REQUIRE_FALSE(packets.empty());
        for (std::size_t i = 1; i < packets.size(); ++i)
            CHECK(packets[i].timestamp >= packets[i - 1].timestamp);
    }
}

TEST_CASE("outbreak injections multiply the population from the onset") {
    auto spec = small_spec(1);
    spec.days = 5;
    spec.injections = {{3, Archetype::MiraiTelnet, 10.0}};
    CHECK(effective_population(spec, Archetype::MiraiTelnet, 2) == 8);
    CHECK(effective_population(spec, Archetype::MiraiTelnet, 3) == 80);
    CHECK(effective_population(spec, Archetype::MiraiTelnet, 4) == 80);  // onset persists
    CHECK(effective_population(spec, Archetype::SmbWorm, 3) == 20);

    spec.persist_outbreaks = false;
    CHECK(effective_population(spec, Archetype::MiraiTelnet, 4) == 8);

    TempDir dir("inject");
    spec.persist_outbreaks = true;
    auto gen = generate_scenario(spec, dir.path());
    auto truth = read_ground_truth(gen.truth_file);
    std::map<std::string, int> mirai_per_day;
    for (const auto& row : truth)
        if (row.archetype == "MiraiTelnet") ++mirai_per_day[row.day];
    CHECK(mirai_per_day[gen.day_labels[1]] == 8);
    CHECK(mirai_per_day[gen.day_labels[2]] == 80);
}

TEST_CASE("scenario json round trip") {
    auto spec = small_spec(3);
    spec.injections = {{2, Archetype::CwmpSsh, 4.0}};
    auto loaded = scenario_from_json(scenario_to_json(spec));
    CHECK(loaded.days == spec.days);
    CHECK(loaded.seed == spec.seed);
    CHECK(loaded.population == spec.population);
    REQUIRE(loaded.injections.size() == 1);
    CHECK(loaded.injections[0].archetype == Archetype::CwmpSsh);
    CHECK_THROWS_AS(scenario_from_json("{}"), InputError);
}

TEST_CASE("sanity metric separates archetypes") {
    TempDir dir("sanity");
    auto gen = generate_scenario(small_spec(15), dir.path());
    auto sanity = nlohmann::json::parse(read_file(gen.sanity_file));
    CHECK(sanity.at("recoverable").get<bool>());
    CHECK(sanity.at("within_archetype_mean_distance").get<double>() <
          sanity.at("between_archetype_mean_distance").get<double>());
}

TEST_CASE("three-day pipeline produces every artifact plus a 2-point series") {
    TempDir dir("pipe");
    auto gen = generate_scenario(small_spec(21), dir.file("scenario"));
    auto cfg = small_pipeline(gen, dir.file("out"));
    auto manifest = run_pipeline(cfg);

    std::vector<std::string> stage_names;
    for (const auto& stage : manifest.stages) stage_names.push_back(stage.name);
    CHECK(stage_names == std::vector<std::string>{"ingest", "enrich", "featurize", "train",
                                                  "embed", "cluster", "evaluate", "report",
                                                  "signature", "diff"});
    // 3 signatures and a 2-row series
    std::size_t signature_outputs = 0;
    for (const auto& stage : manifest.stages)
        if (stage.name == "signature") signature_outputs = stage.outputs.size();
    CHECK(signature_outputs == 3);

    auto series = read_file(dir.file("out") + "/series.csv");
    CHECK(std::count(series.begin(), series.end(), '\n') == 3);  // header + 2 rows

    // schema fingerprints agree across the day signatures
    auto s1 = signature_from_json(read_file(dir.file("out") + "/signature_day01.json"));
    auto s3 = signature_from_json(read_file(dir.file("out") + "/signature_day03.json"));
    CHECK(s1.schema_fingerprint == s3.schema_fingerprint);
    CHECK(emd(s1, s3) >= 0.0);
}

TEST_CASE("identical seeds reproduce byte-identical manifests") {
    TempDir dir("repro");
    auto gen = generate_scenario(small_spec(33), dir.file("scenario"));
    auto cfg1 = small_pipeline(gen, dir.file("out1"));
    auto cfg2 = small_pipeline(gen, dir.file("out2"));
    auto m1 = run_pipeline(cfg1);
    auto m2 = run_pipeline(cfg2);

    // same stage digests despite different output directories
    REQUIRE(m1.stages.size() == m2.stages.size());
    for (std::size_t s = 0; s < m1.stages.size(); ++s) {
        REQUIRE(m1.stages[s].outputs.size() == m2.stages[s].outputs.size());
        auto it1 = m1.stages[s].outputs.begin();
        auto it2 = m2.stages[s].outputs.begin();
        for (; it1 != m1.stages[s].outputs.end(); ++it1, ++it2)
            CHECK(it1->second == it2->second);
    }

    // literally byte-identical manifests when the out_dir matches
    std::filesystem::remove_all(dir.file("out1"));
    auto m3 = run_pipeline(cfg1);
    CHECK(manifest_to_json(m1) == manifest_to_json(m3));
}

TEST_CASE("per-day parallelism changes no output byte") {
    TempDir dir("threads");
    auto gen = generate_scenario(small_spec(55), dir.file("scenario"));
    auto serial_cfg = small_pipeline(gen, dir.file("serial"));
    auto parallel_cfg = small_pipeline(gen, dir.file("parallel"));
    parallel_cfg.threads = 4;
    auto serial = run_pipeline(serial_cfg);
    auto parallel = run_pipeline(parallel_cfg);
    REQUIRE(serial.stages.size() == parallel.stages.size());
    for (std::size_t s = 0; s < serial.stages.size(); ++s) {
        auto it1 = serial.stages[s].outputs.begin();
        auto it2 = parallel.stages[s].outputs.begin();
        for (; it1 != serial.stages[s].outputs.end(); ++it1, ++it2)
            CHECK(it1->second == it2->second);
    }
}

TEST_CASE("pipeline failures name the failing stage") {
    TempDir dir("fail");
    auto gen = generate_scenario(small_spec(63), dir.file("scenario"));
    auto cfg = small_pipeline(gen, dir.file("out"));
    cfg.k = 100000;  // far beyond N
    try {
        run_pipeline(cfg);
        FAIL("expected the cluster stage to abort");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("cluster") != std::string::npos);
    }

    cfg.k = 5;
    cfg.packet_files.push_back(dir.file("missing.jsonl"));
    CHECK_THROWS_AS(run_pipeline(cfg), InputError);
}

TEST_CASE("dated censys snapshots select the closest prior file per day") {
    TempDir dir("snapshots");
    auto spec = small_spec(71);
    spec.days = 2;
    auto gen = generate_scenario(spec, dir.file("scenario"));
    auto cfg = small_pipeline(gen, dir.file("out"));
    // day 1 keeps the generated snapshot; day 2 switches to an empty one
    write_file_atomic(dir.file("empty.jsonl"), "");
    cfg.censys_file.clear();
    cfg.censys_snapshots = {{gen.day_labels[0], gen.censys_file},
                            {gen.day_labels[1], dir.file("empty.jsonl")}};
    run_pipeline(cfg);

    auto day1 = read_profiles(dir.file("out") + "/profiles_day01.jsonl");
    auto day2 = read_profiles(dir.file("out") + "/profiles_day02.jsonl");
    const bool day1_has_censys =
        std::any_of(day1.begin(), day1.end(), [](const auto& p) { return p.has_censys; });
    const bool day2_has_censys =
        std::any_of(day2.begin(), day2.end(), [](const auto& p) { return p.has_censys; });
    CHECK(day1_has_censys);
    CHECK_FALSE(day2_has_censys);

    cfg.censys_snapshots = {{gen.day_labels[1], gen.censys_file},
                            {gen.day_labels[0], dir.file("empty.jsonl")}};
    CHECK_THROWS_AS(run_pipeline(cfg), InputError);
}

TEST_CASE("pipeline config json round trip") {
    PipelineConfig cfg;
    cfg.packet_files = {"a.jsonl", "b.jsonl"};
    cfg.k = 17;
    cfg.mode = EncodingMode::Thermometer;
    cfg.mlp.hidden_dims = {48, 16};
    cfg.tree_mode = "exact";
    cfg.space = SignatureSpace::Latent;
    auto loaded = pipeline_config_from_json(pipeline_config_to_json(cfg));
    CHECK(loaded.packet_files == cfg.packet_files);
    CHECK(loaded.k == 17);
    CHECK(loaded.mode == EncodingMode::Thermometer);
    CHECK(loaded.mlp.hidden_dims == cfg.mlp.hidden_dims);
    CHECK(loaded.tree_mode == "exact");
    CHECK(loaded.space == SignatureSpace::Latent);
}
