#include "darknet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "darknet/common.hpp"
#include "darknet/ipv4.hpp"

namespace darknet {

const std::vector<std::string>& numeric_feature_names() {
    static const std::vector<std::string> names = {
        "total_packets",   "total_bytes",     "total_lifetime",  "num_ports",
        "avg_lifetime",    "avg_packet_size", "min_unique_dsts", "max_unique_dsts",
        "min_unique_dst24", "max_unique_dst24"};
    return names;
}

std::array<double, kNumericFeatureCount> numeric_features(const ScannerProfile& p) {
    return {static_cast<double>(p.total_packets),
            static_cast<double>(p.total_bytes),
            p.total_lifetime,
            static_cast<double>(p.num_ports),
            p.avg_lifetime,
            p.avg_packet_size,
            static_cast<double>(p.min_unique_dsts),
            static_cast<double>(p.max_unique_dsts),
            static_cast<double>(p.min_unique_dst24),
            static_cast<double>(p.max_unique_dst24)};
}

std::vector<std::uint8_t> thermometer(double value, const std::vector<double>& edges) {
    std::vector<std::uint8_t> bits(edges.size(), 0);
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (value >= edges[k]) bits[k] = 1;
    }
    return bits;
}

ThermometerBins fit_feature_bins(const std::vector<double>& values, int bins_per_feature) {
    if (bins_per_feature < 2) throw InputError("bins_per_feature must be >= 2");
    double min_pos = 0.0, max_val = 0.0;
    bool any_pos = false, any = false;
    for (double v : values) {
        if (!any || v > max_val) max_val = v;
        any = true;
        if (v > 0 && (!any_pos || v < min_pos)) {
            min_pos = v;
            any_pos = true;
        }
    }
    if (!any) throw InputError("cannot fit bins on an empty value list");

    ThermometerBins out;
    if (!any_pos || max_val <= min_pos) {
        out.degenerate = true;
        out.edges = {any_pos ? min_pos : max_val};
        return out;
    }
    double lo = std::log2(min_pos);
    double hi = std::log2(max_val);
    out.edges.reserve(static_cast<std::size_t>(bins_per_feature));
    for (int k = 0; k < bins_per_feature; ++k) {
        out.edges.push_back(std::exp2(lo + (hi - lo) * static_cast<double>(k) / bins_per_feature));
    }
    // exp2/log2 round-trips can wobble the first edge below min_pos
    out.edges[0] = min_pos;
    return out;
}

namespace {

template <typename T>
std::vector<T> top_by_sources(const std::map<T, std::size_t>& counts, int u) {
    std::vector<std::pair<T, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<T> top;
    for (const auto& [v, n] : ranked) {
        if (static_cast<int>(top.size()) >= u) break;
        top.push_back(v);
    }
    return top;
}

void append_hex_double(std::string& s, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g;", v);
    s += buf;
}

}  // namespace

FeatureSchema build_schema(const std::vector<ScannerProfile>& profiles, int u, EncodingMode mode,
                           int bins_per_feature) {
    if (profiles.empty()) throw InputError("cannot build a schema from zero profiles");
    if (u < 1) throw InputError("top-value cutoff u must be >= 1");

    FeatureSchema s;
    s.u = u;
    s.mode = mode;
    s.bins_per_feature = bins_per_feature;

    std::map<std::uint16_t, std::size_t> port_sources, cport_sources;
    std::map<std::string, std::size_t> proto_sources, ctag_sources;
    for (const auto& p : profiles) {
        for (auto port : p.ports) ++port_sources[port];
        for (const auto& proto : p.protocols) ++proto_sources[proto];
        for (auto port : p.censys_ports) ++cport_sources[port];
        for (const auto& tag : p.censys_tags) ++ctag_sources[tag];
    }
    s.top_ports = top_by_sources(port_sources, u);
    s.top_protocols = top_by_sources(proto_sources, u);
    s.top_censys_ports = top_by_sources(cport_sources, u);
    s.top_censys_tags = top_by_sources(ctag_sources, u);

    std::vector<std::vector<double>> columns(kNumericFeatureCount);
    for (const auto& p : profiles) {
        auto nf = numeric_features(p);
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j) columns[j].push_back(nf[j]);
    }
    if (mode == EncodingMode::OneHot) {
        s.scale_min.resize(kNumericFeatureCount);
        s.scale_max.resize(kNumericFeatureCount);
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j) {
            double lo = std::log1p(columns[j][0]), hi = lo;
            for (double v : columns[j]) {
                double x = std::log1p(v);
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            s.scale_min[j] = lo;
            s.scale_max[j] = hi;
        }
    } else {
        s.bins.reserve(kNumericFeatureCount);
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j)
            s.bins.push_back(fit_feature_bins(columns[j], bins_per_feature));
    }
    return s;
}

std::size_t FeatureSchema::numeric_width() const {
    if (mode == EncodingMode::OneHot) return kNumericFeatureCount;
    std::size_t w = 0;
    for (const auto& b : bins) w += b.edges.size();
    return w;
}

std::size_t FeatureSchema::width() const {
    return numeric_width() + top_ports.size() + 1 + top_protocols.size() + 1 +
           top_censys_ports.size() + 1 + top_censys_tags.size() + 1;
}

std::vector<std::string> FeatureSchema::column_names() const {
    std::vector<std::string> names;
    names.reserve(width());
    const auto& numeric = numeric_feature_names();
    if (mode == EncodingMode::OneHot) {
        for (const auto& n : numeric) names.push_back(n);
    } else {
        for (std::size_t j = 0; j < bins.size(); ++j)
            for (std::size_t k = 0; k < bins[j].edges.size(); ++k)
                names.push_back(numeric[j] + "#" + std::to_string(k));
    }
    for (auto p : top_ports) names.push_back("port:" + std::to_string(p));
    names.push_back("port:other");
    for (const auto& p : top_protocols) names.push_back("proto:" + p);
    names.push_back("proto:other");
    for (auto p : top_censys_ports) names.push_back("cport:" + std::to_string(p));
    names.push_back("cport:other");
    for (const auto& t : top_censys_tags) names.push_back("ctag:" + t);
    names.push_back("ctag:other");
    return names;
}

std::uint64_t FeatureSchema::fingerprint() const {
    std::string blob;
    blob += mode == EncodingMode::OneHot ? "onehot;" : "thermo;";
    for (const auto& n : column_names()) blob += n + ";";
    for (double v : scale_min) append_hex_double(blob, v);
    for (double v : scale_max) append_hex_double(blob, v);
    for (const auto& b : bins) {
        for (double e : b.edges) append_hex_double(blob, e);
        blob += b.degenerate ? "d;" : "n;";
    }
    return fnv1a64(blob);
}

namespace {

template <typename T, typename Set>
void write_onehot(std::vector<double>& row, std::size_t& at, const std::vector<T>& vocab,
                  const Set& present) {
    bool other = false;
    for (const auto& v : present) {
        if (std::find(vocab.begin(), vocab.end(), v) == vocab.end()) {
            other = true;
            break;
        }
    }
    for (const auto& v : vocab) row[at++] = present.count(v) ? 1.0 : 0.0;
    row[at++] = other ? 1.0 : 0.0;
}

}  // namespace

std::vector<double> vectorize(const ScannerProfile& profile, const FeatureSchema& schema) {
    std::vector<double> row(schema.width(), 0.0);
    std::size_t at = 0;
    auto nf = numeric_features(profile);
    if (schema.mode == EncodingMode::OneHot) {
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j) {
            double x = std::log1p(nf[j]);
            double span = schema.scale_max[j] - schema.scale_min[j];
            double v = span > 0 ? (x - schema.scale_min[j]) / span : 0.0;
            row[at++] = std::clamp(v, 0.0, 1.0);
        }
    } else {
        for (std::size_t j = 0; j < kNumericFeatureCount; ++j) {
            for (double e : schema.bins[j].edges) row[at++] = nf[j] >= e ? 1.0 : 0.0;
        }
    }
    write_onehot(row, at, schema.top_ports, profile.ports);
    write_onehot(row, at, schema.top_protocols, profile.protocols);
    write_onehot(row, at, schema.top_censys_ports, profile.censys_ports);
    write_onehot(row, at, schema.top_censys_tags, profile.censys_tags);
    return row;
}

FeatureMatrix vectorize_all(const std::vector<ScannerProfile>& profiles,
                            const FeatureSchema& schema) {
    FeatureMatrix fm;
    fm.schema = schema;
    fm.values = Matrix(profiles.size(), schema.width());
    fm.row_ids.reserve(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        auto row = vectorize(profiles[i], schema);
        std::copy(row.begin(), row.end(), fm.values.row(i).begin());
        fm.row_ids.push_back(format_ipv4(profiles[i].src_ip));
    }
    return fm;
}

}  // namespace darknet
