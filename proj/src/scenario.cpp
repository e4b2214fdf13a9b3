#include "darknet/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "darknet/common.hpp"
#include "darknet/io.hpp"
#include "darknet/ipv4.hpp"
#include "darknet/profile.hpp"
#include "darknet/rng.hpp"
#include "json.hpp"

namespace darknet {

const char* archetype_name(Archetype a) {
    switch (a) {
        case Archetype::MiraiTelnet: return "MiraiTelnet";
        case Archetype::SmbWorm: return "SmbWorm";
        case Archetype::CwmpSsh: return "CwmpSsh";
        case Archetype::DnsAmp: return "DnsAmp";
        case Archetype::EphemeralUdpSpray: return "EphemeralUdpSpray";
    }
    return "MiraiTelnet";
}

Archetype archetype_from_name(const std::string& name) {
    for (Archetype a : {Archetype::MiraiTelnet, Archetype::SmbWorm, Archetype::CwmpSsh,
                        Archetype::DnsAmp, Archetype::EphemeralUdpSpray})
        if (name == archetype_name(a)) return a;
    throw InputError("unknown archetype: " + name);
}

std::string scenario_to_json(const ScenarioSpec& spec) {
    nlohmann::json j;
    j["format"] = "darknet-scenario-v1";
    j["days"] = spec.days;
    j["seed"] = spec.seed;
    j["start_day"] = spec.start_day;
    j["persist_outbreaks"] = spec.persist_outbreaks;
    auto& pop = j["population"] = nlohmann::json::object();
    for (const auto& [a, n] : spec.population) pop[archetype_name(a)] = n;
    auto& inj = j["injections"] = nlohmann::json::array();
    for (const auto& i : spec.injections)
        inj.push_back({{"day", i.day},
                       {"archetype", archetype_name(i.archetype)},
                       {"multiplier", i.multiplier}});
    return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& serialized) {
    nlohmann::json j = nlohmann::json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-scenario-v1")
        throw InputError("not a recognizable scenario file");
    ScenarioSpec spec;
    spec.days = j.at("days").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.start_day = j.value("start_day", "2020-09-01");
    spec.persist_outbreaks = j.value("persist_outbreaks", true);
    for (const auto& [name, n] : j.at("population").items())
        spec.population[archetype_from_name(name)] = n.get<int>();
    for (const auto& ji : j.value("injections", nlohmann::json::array())) {
        OutbreakInjection inj;
        inj.day = ji.at("day").get<int>();
        inj.archetype = archetype_from_name(ji.at("archetype").get<std::string>());
        inj.multiplier = ji.at("multiplier").get<double>();
        spec.injections.push_back(inj);
    }
    if (spec.days < 1) throw InputError("scenario needs at least one day");
    for (const auto& [a, n] : spec.population)
        if (n < 0) throw InputError("archetype populations must be non-negative");
    return spec;
}

int effective_population(const ScenarioSpec& spec, Archetype archetype, int day) {
    double pop = 0.0;
    auto it = spec.population.find(archetype);
    if (it != spec.population.end()) pop = it->second;
    for (const auto& inj : spec.injections) {
        if (inj.archetype != archetype) continue;
        const bool active = spec.persist_outbreaks ? day >= inj.day : day == inj.day;
        if (active) pop *= inj.multiplier;
    }
    return static_cast<int>(std::llround(pop));
}

namespace {

struct ModeCensys {
    std::set<std::uint16_t> ports;
    std::set<std::string> tags;
};

struct ArchetypeProfile {
    std::uint32_t pool_base;        // /8 pool the sources come from
    const char* country;
    const char* asn;
    Protocol protocol;
    std::vector<std::uint16_t> primary_ports;
    // the ~5% contamination sub-modes; contaminated scanners rotate over them
    std::vector<std::vector<std::uint16_t>> secondary_modes;
    double log_packets_mu;
    double log_packets_sigma;
    bool mirai;                      // stamp the Mirai fingerprint on TCP probes
    bool random_high_ports;          // EphemeralUdpSpray behavior
    std::set<std::uint16_t> censys_ports;
    std::set<std::string> censys_tags;
    // host intelligence per sub-mode, when it differs from the archetype's
    std::vector<ModeCensys> secondary_censys;
};

const ArchetypeProfile& profile_of(Archetype a) {
    static const ArchetypeProfile mirai{0x29000000u /*41/8*/, "EG", "AS8452", Protocol::TCP,
                                        {23}, {{2323}}, 3.0, 0.18, true, false,
                                        {80}, {"upnp"}, {}};
    static const ArchetypeProfile smb{0x67000000u /*103/8*/, "CN", "AS4134", Protocol::TCP,
                                      {445}, {{139}}, 3.2, 0.18, false, false,
                                      {445}, {"smb"}, {}};
    static const ArchetypeProfile cwmp{0x49000000u /*73/8*/, "US", "AS7922", Protocol::TCP,
                                       {22}, {{22, 2222}}, 3.4, 0.18, false, false,
                                       {7547}, {"cwmp"},
                                       {{{7547, 2222}, {"cwmp", "dropbear"}}}};
    static const ArchetypeProfile dns{0xbe000000u /*190/8*/, "BR", "AS28573", Protocol::UDP,
                                      {53}, {{5353}}, 3.6, 0.18, false, false,
                                      {53}, {"dns"}, {}};
    static const ArchetypeProfile spray{0x5e000000u /*94/8*/, "DE", "AS3320", Protocol::UDP,
                                        {}, {{80}, {443}}, 4.2, 0.15, false, true,
                                        {80, 443}, {"http", "https"},
                                        {{{80}, {"http"}}, {{443}, {"https"}}}};
    switch (a) {
        case Archetype::MiraiTelnet: return mirai;
        case Archetype::SmbWorm: return smb;
        case Archetype::CwmpSsh: return cwmp;
        case Archetype::DnsAmp: return dns;
        case Archetype::EphemeralUdpSpray: return spray;
    }
    return mirai;
}

constexpr std::uint32_t kTelescopeBase = 0x64400000u;  // 100.64.0.0/13
constexpr std::uint32_t kTelescopeSize = 1u << 19;

double day_start_epoch(const CalendarDay& first, int day_index) {
    // days since epoch for `first`, cheap linear scan from 1970
    std::int64_t days = 0;
    for (int y = 1970; y < first.year; ++y)
        days += ((y % 4 == 0 && y % 100 != 0) || y % 400 == 0) ? 366 : 365;
    static const int cumulative[12] = {0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334};
    days += cumulative[first.month - 1];
    if (first.month > 2 && ((first.year % 4 == 0 && first.year % 100 != 0) || first.year % 400 == 0))
        days += 1;
    days += first.day - 1 + day_index;
    return static_cast<double>(days) * 86400.0;
}

struct ScannerPlan {
    std::uint32_t ip;
    Archetype archetype;
    std::vector<std::uint16_t> ports;
    int packets;
    bool mirai;
    Protocol protocol;
    std::set<std::uint16_t> censys_ports;
    std::set<std::string> censys_tags;
};

}  // namespace

GeneratedScenario generate_scenario(const ScenarioSpec& spec, const std::string& out_dir) {
    if (spec.days < 1) throw InputError("scenario needs at least one day");
    std::filesystem::create_directories(out_dir);
    const CalendarDay first = parse_day(spec.start_day);

    GeneratedScenario out;
    std::string truth_blob = "day,src_ip,archetype\n";
    std::string censys_blob;

    static const Archetype all_archetypes[] = {Archetype::MiraiTelnet, Archetype::SmbWorm,
                                               Archetype::CwmpSsh, Archetype::DnsAmp,
                                               Archetype::EphemeralUdpSpray};

    // per-archetype numeric summaries for the recoverability sanity metric
    std::map<Archetype, std::vector<std::array<double, 3>>> sketches;

    for (int day = 1; day <= spec.days; ++day) {
        const double t0 = day_start_epoch(first, day - 1);
        const std::string day_label = day_of_timestamp(t0).iso();
        out.day_labels.push_back(day_label);

        std::vector<ScannerPlan> plans;
        for (Archetype a : all_archetypes) {
            const ArchetypeProfile& ap = profile_of(a);
            const int pop = effective_population(spec, a, day);
            if (pop <= 0) continue;
            const bool outbreak_active = [&] {
                for (const auto& inj : spec.injections)
                    if (inj.archetype == a &&
                        (spec.persist_outbreaks ? day >= inj.day : day == inj.day))
                        return true;
                return false;
            }();
            // deterministic contamination count: exactly ~5% of the scanners
            // rotate over the archetype's secondary port modes
            const int contaminated = ap.secondary_modes.empty()
                                         ? 0
                                         : static_cast<int>(std::llround(0.05 * pop));
            Rng rng(derive_seed(spec.seed, 0xA0000u + static_cast<std::uint64_t>(day) * 16u +
                                               static_cast<std::uint64_t>(a)));
            for (int idx = 0; idx < pop; ++idx) {
                ScannerPlan plan;
                // sequential hosts inside the archetype's /8, distinct per day
                plan.ip = ap.pool_base |
                          ((static_cast<std::uint32_t>(day) * 100000u +
                            static_cast<std::uint32_t>(idx)) & 0x00ffffffu);
                plan.archetype = a;
                plan.protocol = ap.protocol;
                plan.mirai = ap.mirai;
                const bool secondary = idx < contaminated;
                const std::size_t mode_idx =
                    secondary ? static_cast<std::size_t>(idx) % ap.secondary_modes.size() : 0;
                const std::vector<std::uint16_t>* mode =
                    secondary ? &ap.secondary_modes[mode_idx] : &ap.primary_ports;
                if (secondary && mode_idx < ap.secondary_censys.size()) {
                    plan.censys_ports = ap.secondary_censys[mode_idx].ports;
                    plan.censys_tags = ap.secondary_censys[mode_idx].tags;
                } else {
                    plan.censys_ports = ap.censys_ports;
                    plan.censys_tags = ap.censys_tags;
                }
                if (ap.random_high_ports) {
                    const int n_ports =
                        secondary ? static_cast<int>(mode->size()) + 2
                                  : 12 + static_cast<int>(rng.below(5));
                    std::set<std::uint16_t> picked(mode->begin(), mode->end());
                    while (static_cast<int>(picked.size()) < n_ports)
                        picked.insert(static_cast<std::uint16_t>(20000 + rng.below(40000)));
                    plan.ports.assign(picked.begin(), picked.end());
                } else {
                    plan.ports = *mode;
                }
                double mu = ap.log_packets_mu + (outbreak_active ? std::log(1.6) : 0.0);
                plan.packets = std::max(3, static_cast<int>(std::llround(
                                               rng.lognormal(mu, ap.log_packets_sigma))));
                if (ap.random_high_ports && !secondary)
                    plan.packets = std::max<int>(plan.packets,
                                                 static_cast<int>(plan.ports.size()) * 2);
                plans.push_back(std::move(plan));
            }
        }

        // emit packets for every scanner, then order the day stream by time
        std::vector<PacketRecord> packets;
        Rng rng(derive_seed(spec.seed, 0xB0000u + static_cast<std::uint64_t>(day)));
        for (const auto& plan : plans) {
            truth_blob += day_label + "," + format_ipv4(plan.ip) + "," +
                          archetype_name(plan.archetype) + "\n";
            double t = t0 + rng.uniform(600.0, 80000.0);
            std::uint64_t dst_count = 0;
            double bytes_sum = 0.0;
            for (int p = 0; p < plan.packets; ++p) {
                PacketRecord pkt;
                pkt.timestamp = t;
                t += rng.uniform(0.2, 25.0);
                pkt.src_ip = plan.ip;
                pkt.dst_ip = kTelescopeBase + static_cast<std::uint32_t>(rng.below(kTelescopeSize));
                pkt.protocol = plan.protocol;
                pkt.dst_port = plan.ports[static_cast<std::size_t>(p) % plan.ports.size()];
                pkt.src_port = static_cast<std::uint16_t>(1024 + rng.below(60000));
                pkt.ip_id = static_cast<std::uint16_t>(rng.below(54000));  // never the zmap id
                if (plan.protocol == Protocol::TCP) {
                    pkt.tcp_flags = tcpflag::SYN;
                    pkt.tcp_seq = plan.mirai ? pkt.dst_ip
                                             : static_cast<std::uint32_t>(rng.next_u64());
                    pkt.packet_bytes = 40 + static_cast<std::uint32_t>(rng.below(8));
                } else {
                    pkt.packet_bytes = 60 + static_cast<std::uint32_t>(rng.below(80));
                }
                ++dst_count;
                bytes_sum += pkt.packet_bytes;
                packets.push_back(pkt);
            }
            sketches[plan.archetype].push_back(
                {std::log1p(static_cast<double>(plan.packets)),
                 std::log1p(static_cast<double>(plan.ports.size())),
                 std::log1p(bytes_sum / static_cast<double>(dst_count))});
        }
        std::stable_sort(packets.begin(), packets.end(),
                         [](const PacketRecord& a, const PacketRecord& b) {
                             return a.timestamp < b.timestamp;
                         });
        std::string blob;
        for (const auto& pkt : packets) {
            blob += packet_to_json(pkt);
            blob += '\n';
        }
        char name[32];
        std::snprintf(name, sizeof(name), "day%02d.jsonl", day);
        const std::string path = out_dir + "/" + name;
        write_file_atomic(path, blob);
        out.packet_files.push_back(path);

        // censys snapshot rows for this day's scanners
        for (const auto& plan : plans) {
            CensysRecord rec{plan.ip, plan.censys_ports, plan.censys_tags};
            censys_blob += censys_to_json(rec);
            censys_blob += '\n';
        }
    }

    out.truth_file = out_dir + "/ground_truth.csv";
    write_file_atomic(out.truth_file, truth_blob);
    out.censys_file = out_dir + "/censys.jsonl";
    write_file_atomic(out.censys_file, censys_blob);

    std::string geo = "prefix,value\n";
    std::string asn = "prefix,value\n";
    for (Archetype a : all_archetypes) {
        const ArchetypeProfile& ap = profile_of(a);
        const std::string prefix = format_ipv4(ap.pool_base) + "/8";
        geo += prefix + "," + ap.country + "\n";
        asn += prefix + "," + ap.asn + "\n";
    }
    out.geo_file = out_dir + "/geo.csv";
    write_file_atomic(out.geo_file, geo);
    out.asn_file = out_dir + "/asn.csv";
    write_file_atomic(out.asn_file, asn);

    // recoverability sanity: mean pairwise distance within an archetype should
    // sit below the between-archetype mean on the numeric sketch
    double within = 0.0, between = 0.0;
    std::size_t n_within = 0, n_between = 0;
    auto dist = [](const std::array<double, 3>& x, const std::array<double, 3>& y) {
        double s = 0.0;
        for (std::size_t q = 0; q < 3; ++q) s += (x[q] - y[q]) * (x[q] - y[q]);
        return std::sqrt(s);
    };
    Rng sample_rng(derive_seed(spec.seed, 0x5a17));
    for (const auto& [a1, rows1] : sketches) {
        for (const auto& [a2, rows2] : sketches) {
            if (rows1.empty() || rows2.empty()) continue;
            for (int trial = 0; trial < 400; ++trial) {
                const auto& x = rows1[sample_rng.below(rows1.size())];
                const auto& y = rows2[sample_rng.below(rows2.size())];
                if (a1 == a2) {
                    within += dist(x, y);
                    ++n_within;
                } else {
                    between += dist(x, y);
                    ++n_between;
                }
            }
        }
    }
    nlohmann::json sanity;
    sanity["within_archetype_mean_distance"] = n_within ? within / n_within : 0.0;
    sanity["between_archetype_mean_distance"] = n_between ? between / n_between : 0.0;
    sanity["recoverable"] =
        n_within && n_between && within / n_within < between / n_between;
    out.sanity_file = out_dir + "/sanity.json";
    write_file_atomic(out.sanity_file, sanity.dump(2));
    return out;
}

std::vector<GroundTruthRow> read_ground_truth(const std::string& path) {
    std::vector<GroundTruthRow> rows;
    bool first = true;
    for_each_line(path, [&](std::string_view line) {
        if (line.empty()) return;
        if (first) {
            first = false;
            if (line.rfind("day,", 0) == 0) return;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw InputError("ground truth rows need `day,src_ip,archetype`");
        rows.push_back({fields[0], fields[1], fields[2]});
    });
    return rows;
}

}  // namespace darknet
