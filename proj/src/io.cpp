#include "darknet/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "darknet/common.hpp"
#include "darknet/ipv4.hpp"
#include "json.hpp"

namespace darknet {

using nlohmann::json;

void for_each_line(const std::string& path, const std::function<void(std::string_view)>& fn) {
    gzFile file = gzopen(path.c_str(), "rb");  // reads plain files too
    if (!file) throw InputError("cannot open input file: " + path);
    std::string line;
    char buf[1 << 16];
    int got;
    while ((got = gzread(file, buf, sizeof(buf))) > 0) {
        for (int i = 0; i < got; ++i) {
            if (buf[i] == '\n') {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                fn(line);
                line.clear();
            } else {
                line.push_back(buf[i]);
            }
        }
    }
    const bool failed = got < 0;
    gzclose(file);
    if (failed) throw InputError("error while reading: " + path);
    if (!line.empty()) {
        if (line.back() == '\r') line.pop_back();
        fn(line);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write file: " + tmp);
        out << content;
        if (!out) throw InputError("failed while writing: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_file(path)); }

std::string format_double(double v) {
    char buf[40];
    // shortest representation that round-trips; integers stay integral
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double parsed = std::strtod(buf, nullptr);
    if (parsed == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char probe[40];
            std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
            if (std::strtod(probe, nullptr) == v) return probe;
        }
    }
    return buf;
}

namespace {

json parse_line(std::string_view line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InputError("malformed JSON line: " + std::string(line));
    return j;
}

}  // namespace

std::string packet_to_json(const PacketRecord& pkt) {
    json j;
    j["timestamp"] = pkt.timestamp;
    j["src_ip"] = format_ipv4(pkt.src_ip);
    j["dst_ip"] = format_ipv4(pkt.dst_ip);
    switch (pkt.protocol) {
        case Protocol::TCP: j["protocol"] = "TCP"; break;
        case Protocol::UDP: j["protocol"] = "UDP"; break;
        case Protocol::ICMP: j["protocol"] = "ICMP"; break;
        case Protocol::OTHER: j["protocol"] = pkt.other_proto; break;
    }
    j["src_port"] = pkt.src_port;
    j["dst_port"] = pkt.dst_port;
    j["packet_bytes"] = pkt.packet_bytes;
    j["ip_id"] = pkt.ip_id;
    if (pkt.protocol == Protocol::TCP) {
        j["tcp_flags"] = pkt.tcp_flags;
        j["tcp_seq"] = pkt.tcp_seq;
    }
    if (pkt.protocol == Protocol::ICMP) j["icmp_type"] = pkt.icmp_type;
    return j.dump();
}

PacketRecord packet_from_json(std::string_view line) {
    json j = parse_line(line);
    PacketRecord pkt;
    pkt.timestamp = j.at("timestamp").get<double>();
    pkt.src_ip = parse_ipv4(j.at("src_ip").get<std::string>());
    pkt.dst_ip = parse_ipv4(j.at("dst_ip").get<std::string>());
    const auto& proto = j.at("protocol");
    if (proto.is_number()) {
        pkt.protocol = Protocol::OTHER;
        pkt.other_proto = proto.get<std::uint8_t>();
    } else {
        const auto name = proto.get<std::string>();
        if (name == "TCP") pkt.protocol = Protocol::TCP;
        else if (name == "UDP") pkt.protocol = Protocol::UDP;
        else if (name == "ICMP") pkt.protocol = Protocol::ICMP;
        else throw InputError("unknown protocol: " + name);
    }
    pkt.src_port = j.value("src_port", 0);
    pkt.dst_port = j.value("dst_port", 0);
    pkt.packet_bytes = j.at("packet_bytes").get<std::uint32_t>();
    if (pkt.packet_bytes < 20) throw InputError("packet_bytes below the IPv4 header minimum");
    pkt.ip_id = j.value("ip_id", 0);
    if (pkt.protocol == Protocol::TCP) {
        if (!j.contains("tcp_flags") || !j.contains("tcp_seq"))
            throw InputError("TCP packet is missing tcp_flags/tcp_seq");
        pkt.tcp_flags = j.at("tcp_flags").get<std::uint8_t>();
        pkt.tcp_seq = j.at("tcp_seq").get<std::uint32_t>();
    } else if (j.contains("tcp_flags") || j.contains("tcp_seq")) {
        throw InputError("non-TCP packet carries TCP fields");
    }
    if (pkt.protocol == Protocol::ICMP) {
        if (!j.contains("icmp_type")) throw InputError("ICMP packet is missing icmp_type");
        pkt.icmp_type = j.at("icmp_type").get<std::uint8_t>();
    } else if (j.contains("icmp_type")) {
        throw InputError("non-ICMP packet carries icmp_type");
    }
    return pkt;
}

std::string event_to_json(const DarknetEvent& ev) {
    json j;
    j["key"] = {{"src_ip", format_ipv4(ev.key.src_ip)},
                {"traffic_class", traffic_class_name(ev.key.traffic_class)},
                {"flags_signature", ev.key.flags_sig},
                {"dst_port", ev.key.dst_port}};
    j["first_seen"] = ev.first_seen;
    j["last_seen"] = ev.last_seen;
    j["packets"] = ev.packets;
    j["bytes"] = ev.bytes;
    j["unique_dsts"] = ev.unique_dsts;
    j["unique_dst24"] = ev.unique_dst24;
    j["mirai_packets"] = ev.mirai_packets;
    j["zmap_packets"] = ev.zmap_packets;
    j["masscan_packets"] = ev.masscan_packets;
    return j.dump();
}

DarknetEvent event_from_json(std::string_view line) {
    json j = parse_line(line);
    DarknetEvent ev;
    const auto& key = j.at("key");
    ev.key.src_ip = parse_ipv4(key.at("src_ip").get<std::string>());
    ev.key.traffic_class = traffic_class_from_name(key.at("traffic_class").get<std::string>());
    ev.key.flags_sig = key.at("flags_signature").get<std::string>();
    ev.key.dst_port = key.at("dst_port").get<std::uint16_t>();
    ev.first_seen = j.at("first_seen").get<double>();
    ev.last_seen = j.at("last_seen").get<double>();
    ev.packets = j.at("packets").get<std::uint64_t>();
    ev.bytes = j.at("bytes").get<std::uint64_t>();
    ev.unique_dsts = j.at("unique_dsts").get<std::uint64_t>();
    ev.unique_dst24 = j.at("unique_dst24").get<std::uint64_t>();
    ev.mirai_packets = j.at("mirai_packets").get<std::uint64_t>();
    ev.zmap_packets = j.at("zmap_packets").get<std::uint64_t>();
    ev.masscan_packets = j.at("masscan_packets").get<std::uint64_t>();
    if (ev.first_seen > ev.last_seen) throw InputError("event with first_seen > last_seen");
    if (ev.packets < 1 || ev.unique_dsts < 1) throw InputError("event with zero packets");
    if (ev.unique_dst24 > ev.unique_dsts) throw InputError("event with dst24 > dsts");
    return ev;
}

std::string profile_to_json(const ScannerProfile& p) {
    json j;
    j["src_ip"] = format_ipv4(p.src_ip);
    j["day"] = p.day.iso();
    j["total_packets"] = p.total_packets;
    j["total_bytes"] = p.total_bytes;
    j["total_lifetime"] = p.total_lifetime;
    j["num_ports"] = p.num_ports;
    j["avg_lifetime"] = p.avg_lifetime;
    j["avg_packet_size"] = p.avg_packet_size;
    j["protocols"] = p.protocols;
    j["ports"] = p.ports;
    j["min_unique_dsts"] = p.min_unique_dsts;
    j["max_unique_dsts"] = p.max_unique_dsts;
    j["min_unique_dst24"] = p.min_unique_dst24;
    j["max_unique_dst24"] = p.max_unique_dst24;
    j["censys_ports"] = p.censys_ports;
    j["censys_tags"] = p.censys_tags;
    j["has_censys"] = p.has_censys;
    j["country"] = p.country;
    j["asn"] = p.asn;
    if (!p.dns.empty()) j["dns"] = p.dns;
    j["mirai"] = p.mirai;
    json mix = json::object();
    for (const auto& [cls, count] : p.class_mix) mix[traffic_class_name(cls)] = count;
    j["class_mix"] = std::move(mix);
    json grouping = json::object();
    auto values = grouping_tag_values(p.grouping);
    for (std::size_t t = 0; t < kGroupingTagCount; ++t)
        if (values[t]) grouping[grouping_tag_names()[t]] = true;
    j["grouping"] = std::move(grouping);
    return j.dump();
}

ScannerProfile profile_from_json(std::string_view line) {
    json j = parse_line(line);
    ScannerProfile p;
    p.src_ip = parse_ipv4(j.at("src_ip").get<std::string>());
    p.day = parse_day(j.at("day").get<std::string>());
    p.total_packets = j.at("total_packets").get<std::uint64_t>();
    p.total_bytes = j.at("total_bytes").get<std::uint64_t>();
    p.total_lifetime = j.at("total_lifetime").get<double>();
    p.num_ports = j.at("num_ports").get<std::uint64_t>();
    p.avg_lifetime = j.at("avg_lifetime").get<double>();
    p.avg_packet_size = j.at("avg_packet_size").get<double>();
    p.protocols = j.at("protocols").get<std::set<std::string>>();
    p.ports = j.at("ports").get<std::set<std::uint16_t>>();
    p.min_unique_dsts = j.at("min_unique_dsts").get<std::uint64_t>();
    p.max_unique_dsts = j.at("max_unique_dsts").get<std::uint64_t>();
    p.min_unique_dst24 = j.at("min_unique_dst24").get<std::uint64_t>();
    p.max_unique_dst24 = j.at("max_unique_dst24").get<std::uint64_t>();
    p.censys_ports = j.at("censys_ports").get<std::set<std::uint16_t>>();
    p.censys_tags = j.at("censys_tags").get<std::set<std::string>>();
    p.has_censys = j.value("has_censys", !p.censys_ports.empty() || !p.censys_tags.empty());
    p.country = j.at("country").get<std::string>();
    p.asn = j.at("asn").get<std::string>();
    p.dns = j.value("dns", "");
    p.mirai = j.at("mirai").get<bool>();
    std::set<TrafficClass> classes;
    for (const auto& [name, count] : j.at("class_mix").items()) {
        const TrafficClass cls = traffic_class_from_name(name);
        p.class_mix[cls] = count.get<std::uint64_t>();
        classes.insert(cls);
    }
    std::optional<CensysRecord> censys;
    if (p.has_censys) censys = CensysRecord{p.src_ip, p.censys_ports, p.censys_tags};
    p.grouping = grouping_tags(p.ports, censys, classes);
    return p;
}

std::string censys_to_json(const CensysRecord& rec) {
    json j;
    j["ip"] = format_ipv4(rec.ip);
    j["open_ports"] = rec.open_ports;
    j["tags"] = rec.tags;
    return j.dump();
}

CensysRecord censys_from_json(std::string_view line) {
    json j = parse_line(line);
    CensysRecord rec;
    rec.ip = parse_ipv4(j.at("ip").get<std::string>());
    rec.open_ports = j.at("open_ports").get<std::set<std::uint16_t>>();
    for (auto tag : j.at("tags").get<std::vector<std::string>>()) {
        for (char& c : tag) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        rec.tags.insert(std::move(tag));
    }
    return rec;
}

std::vector<PacketRecord> read_packets(const std::string& path) {
    std::vector<PacketRecord> out;
    for_each_line(path, [&](std::string_view line) {
        if (!line.empty()) out.push_back(packet_from_json(line));
    });
    return out;
}

std::vector<DarknetEvent> read_events(const std::string& path) {
    std::vector<DarknetEvent> out;
    for_each_line(path, [&](std::string_view line) {
        if (!line.empty()) out.push_back(event_from_json(line));
    });
    return out;
}

std::vector<ScannerProfile> read_profiles(const std::string& path) {
    std::vector<ScannerProfile> out;
    for_each_line(path, [&](std::string_view line) {
        if (!line.empty()) out.push_back(profile_from_json(line));
    });
    return out;
}

std::map<std::uint32_t, CensysRecord> read_censys(const std::string& path) {
    std::map<std::uint32_t, CensysRecord> out;
    for_each_line(path, [&](std::string_view line) {
        if (line.empty()) return;
        CensysRecord rec = censys_from_json(line);
        out[rec.ip] = std::move(rec);
    });
    return out;
}

void write_events(const std::string& path, const std::vector<DarknetEvent>& events) {
    std::string blob;
    for (const auto& ev : events) {
        blob += event_to_json(ev);
        blob += '\n';
    }
    write_file_atomic(path, blob);
}

void write_profiles(const std::string& path, const std::vector<ScannerProfile>& profiles) {
    std::string blob;
    for (const auto& p : profiles) {
        blob += profile_to_json(p);
        blob += '\n';
    }
    write_file_atomic(path, blob);
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

PrefixTable read_prefix_table(const std::string& path) {
    PrefixTable table;
    bool first = true;
    for_each_line(path, [&](std::string_view line) {
        if (line.empty()) return;
        if (first) {
            first = false;
            if (line.rfind("prefix,", 0) == 0) return;  // header
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw InputError("prefix table rows need exactly `prefix,value`: " +
                             std::string(line));
        table.add(fields[0], fields[1]);
    });
    return table;
}

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& row_ids,
                      const std::vector<std::string>& column_names) {
    if (row_ids.size() != m.rows || column_names.size() != m.cols)
        throw InputError("matrix csv: ids or names do not match the matrix shape");
    std::string blob = "row_id";
    for (const auto& name : column_names) {
        blob += ',';
        blob += name;
    }
    blob += '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        blob += row_ids[i];
        auto row = m.row(i);
        for (std::size_t c = 0; c < m.cols; ++c) {
            blob += ',';
            blob += format_double(row[c]);
        }
        blob += '\n';
    }
    write_file_atomic(path, blob);
}

LabeledMatrix read_matrix_csv(const std::string& path) {
    LabeledMatrix out;
    std::vector<std::vector<double>> rows;
    bool first = true;
    for_each_line(path, [&](std::string_view line) {
        if (line.empty()) return;
        auto fields = split_csv_line(line);
        if (first) {
            first = false;
            if (fields.empty() || fields[0] != "row_id")
                throw InputError("matrix csv must start with a row_id header: " + path);
            out.column_names.assign(fields.begin() + 1, fields.end());
            return;
        }
        if (fields.size() != out.column_names.size() + 1)
            throw InputError("matrix csv row width mismatch in " + path);
        out.row_ids.push_back(fields[0]);
        std::vector<double> values;
        values.reserve(fields.size() - 1);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            char* end = nullptr;
            values.push_back(std::strtod(fields[c].c_str(), &end));
            if (end == fields[c].c_str()) throw InputError("bad number in " + path);
        }
        rows.push_back(std::move(values));
    });
    out.values = Matrix(rows.size(), out.column_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), out.values.row(i).begin());
    return out;
}

void write_labels_csv(const std::string& path, const std::vector<std::string>& row_ids,
                      const std::vector<int>& labels) {
    if (row_ids.size() != labels.size()) throw InputError("labels do not match row ids");
    std::string blob = "row_id,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        blob += row_ids[i] + "," + std::to_string(labels[i]) + "\n";
    write_file_atomic(path, blob);
}

std::vector<std::pair<std::string, std::string>> read_labels_csv(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    bool first = true;
    for_each_line(path, [&](std::string_view line) {
        if (line.empty()) return;
        if (first) {
            first = false;
            if (line.rfind("row_id,", 0) == 0) return;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 2) throw InputError("label rows need `row_id,label`: " + path);
        out.emplace_back(fields[0], fields[1]);
    });
    return out;
}

std::string schema_to_json(const FeatureSchema& schema) {
    json j;
    j["format"] = "darknet-schema-v1";
    j["mode"] = schema.mode == EncodingMode::OneHot ? "onehot" : "thermo";
    j["u"] = schema.u;
    j["bins_per_feature"] = schema.bins_per_feature;
    j["top_ports"] = schema.top_ports;
    j["top_protocols"] = schema.top_protocols;
    j["top_censys_ports"] = schema.top_censys_ports;
    j["top_censys_tags"] = schema.top_censys_tags;
    j["scale_min"] = schema.scale_min;
    j["scale_max"] = schema.scale_max;
    auto& bins = j["bins"] = json::array();
    for (const auto& b : schema.bins)
        bins.push_back({{"edges", b.edges}, {"degenerate", b.degenerate}});
    j["numeric_columns"] = numeric_feature_names();
    j["columns"] = schema.column_names();
    j["fingerprint"] = to_hex(schema.fingerprint());
    return j.dump(2);
}

FeatureSchema schema_from_json(const std::string& serialized) {
    json j = json::parse(serialized, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "darknet-schema-v1")
        throw InputError("not a recognizable schema file");
    FeatureSchema schema;
    schema.mode = j.at("mode").get<std::string>() == "thermo" ? EncodingMode::Thermometer
                                                              : EncodingMode::OneHot;
    schema.u = j.at("u").get<int>();
    schema.bins_per_feature = j.at("bins_per_feature").get<int>();
    schema.top_ports = j.at("top_ports").get<std::vector<std::uint16_t>>();
    schema.top_protocols = j.at("top_protocols").get<std::vector<std::string>>();
    schema.top_censys_ports = j.at("top_censys_ports").get<std::vector<std::uint16_t>>();
    schema.top_censys_tags = j.at("top_censys_tags").get<std::vector<std::string>>();
    schema.scale_min = j.at("scale_min").get<std::vector<double>>();
    schema.scale_max = j.at("scale_max").get<std::vector<double>>();
    for (const auto& jb : j.at("bins")) {
        ThermometerBins b;
        b.edges = jb.at("edges").get<std::vector<double>>();
        b.degenerate = jb.at("degenerate").get<bool>();
        schema.bins.push_back(std::move(b));
    }
    return schema;
}

}  // namespace darknet
