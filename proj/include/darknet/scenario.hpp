#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "darknet/packet.hpp"

namespace darknet {

enum class Archetype { MiraiTelnet, SmbWorm, CwmpSsh, DnsAmp, EphemeralUdpSpray };

const char* archetype_name(Archetype a);
Archetype archetype_from_name(const std::string& name);

struct OutbreakInjection {
    int day = 1;  // 1-based
    Archetype archetype = Archetype::MiraiTelnet;
    double multiplier = 1.0;
};

struct ScenarioSpec {
    int days = 30;
    std::map<Archetype, int> population;  // baseline scanners per day
    std::vector<OutbreakInjection> injections;
    std::uint64_t seed = 0;
    std::string start_day = "2020-09-01";
    // an injection marks an onset: the population stays multiplied from that
    // day onward (compromised hosts do not disappear overnight)
    bool persist_outbreaks = true;
};

std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& serialized);

struct GroundTruthRow {
    std::string day;
    std::string src_ip;
    std::string archetype;
};

struct GeneratedScenario {
    std::vector<std::string> packet_files;  // one JSONL per day, time-ordered
    std::string truth_file;                 // day,src_ip,archetype CSV
    std::string censys_file;
    std::string geo_file;
    std::string asn_file;
    std::string sanity_file;  // within/between archetype distance check
    std::vector<std::string> day_labels;
};

// Deterministic given spec.seed; every synthetic scanner lands in the ground
// truth with its archetype.
GeneratedScenario generate_scenario(const ScenarioSpec& spec, const std::string& out_dir);

std::vector<GroundTruthRow> read_ground_truth(const std::string& path);

int effective_population(const ScenarioSpec& spec, Archetype archetype, int day);

}  // namespace darknet
