#include "darknet/enrich.hpp"

#include <algorithm>

#include "darknet/common.hpp"

namespace darknet {

void PrefixTable::add(const std::string& cidr, const std::string& value) {
    add(parse_cidr(cidr), value);
}

void PrefixTable::add(CidrPrefix prefix, std::string value) {
    std::uint32_t mask =
        prefix.length == 0 ? 0u : (prefix.length == 32 ? 0xffffffffu : ~((1u << (32 - prefix.length)) - 1u));
    auto [it, inserted] =
        by_length_[static_cast<std::size_t>(prefix.length)].insert_or_assign(prefix.base & mask, std::move(value));
    (void)it;
    if (inserted) ++count_;
}

std::optional<std::string> PrefixTable::lookup(std::uint32_t ip) const {
    for (int len = 32; len >= 0; --len) {
        const auto& m = by_length_[static_cast<std::size_t>(len)];
        if (m.empty()) continue;
        std::uint32_t mask = len == 0 ? 0u : (len == 32 ? 0xffffffffu : ~((1u << (32 - len)) - 1u));
        auto it = m.find(ip & mask);
        if (it != m.end()) return it->second;
    }
    return std::nullopt;
}

std::optional<std::string> PrefixTable::lookup(const std::string& ip) const {
    return lookup(parse_ipv4(ip));
}

bool port_matches_rdp(std::uint16_t port) {
    // \d+3389\d+ unanchored: needs >= 1 digit before and after "3389",
    // so the string must be at least 6 chars. Ports max out at 5 digits.
    std::string s = std::to_string(port);
    for (std::size_t pos = 1; pos + 4 < s.size(); ++pos) {
        if (s.compare(pos, 4, "3389") == 0) return true;
    }
    return false;
}

bool port_matches_p2p(std::uint16_t port) {
    // 17\d\d\d unanchored against the decimal string
    std::string s = std::to_string(port);
    if (s.size() < 5) return false;
    for (std::size_t pos = 0; pos + 5 <= s.size(); ++pos) {
        if (s[pos] == '1' && s[pos + 1] == '7') return true;
    }
    return false;
}

namespace {

bool any_port(const std::set<std::uint16_t>& ports, std::initializer_list<std::uint16_t> wanted) {
    return std::any_of(wanted.begin(), wanted.end(),
                       [&](std::uint16_t p) { return ports.count(p) > 0; });
}

bool any_tag(const std::set<std::string>& tags, std::initializer_list<const char*> wanted) {
    return std::any_of(wanted.begin(), wanted.end(),
                       [&](const char* t) { return tags.count(t) > 0; });
}

}  // namespace

GroupingTags grouping_tags(const std::set<std::uint16_t>& ports_scanned,
                           const std::optional<CensysRecord>& censys,
                           const std::set<TrafficClass>& classes) {
    GroupingTags g;
    g.darknet_web = any_port(ports_scanned, {80, 443, 81});
    g.darknet_remote = any_port(ports_scanned, {22, 23});
    g.darknet_mssql = ports_scanned.count(1433) > 0;
    g.darknet_samba = ports_scanned.count(445) > 0;
    g.darknet_quote = ports_scanned.count(17) > 0;
    g.darknet_amplification = any_port(ports_scanned, {123, 53, 161, 137, 1900, 19, 27960, 27015});
    for (std::uint16_t p : ports_scanned) {
        if (port_matches_rdp(p)) g.darknet_rdp = true;
        if (port_matches_p2p(p)) g.darknet_p2p = true;
    }
    if (censys) {
        const auto& tags = censys->tags;
        g.censys_web = any_tag(tags, {"http", "https"});
        g.censys_remote = any_tag(tags, {"ssh", "telnet", "remote"});
        g.censys_mssql = tags.count("mssql") > 0;
        g.censys_samba = tags.count("smb") > 0;
        g.censys_embedded = any_tag(tags, {"embedded", "dsl", "model", "iot"});
        g.censys_mgmt = any_tag(tags, {"cwmp", "snmp"});
        g.censys_storage = any_tag(tags, {"ftp", "nas"});
        g.censys_amplification = any_tag(tags, {"dns", "ntp", "memcache"});
    }
    g.scanning = classes.count(TrafficClass::Scanning) > 0;
    g.backscatter = classes.count(TrafficClass::Backscatter) > 0;
    g.udp = classes.count(TrafficClass::Udp) > 0;
    g.unknown = classes.count(TrafficClass::Unknown) > 0;
    return g;
}

const std::array<const char*, kGroupingTagCount>& grouping_tag_names() {
    static const std::array<const char*, kGroupingTagCount> names = {
        "darknet:web",     "darknet:remote",        "darknet:mssql",  "darknet:samba",
        "darknet:rdp",     "darknet:quote",         "darknet:p2p",    "darknet:amplification",
        "censys:web",      "censys:remote",         "censys:mssql",   "censys:samba",
        "censys:embedded", "censys:mgmt",           "censys:storage", "censys:amplification",
        "scanning",        "backscatter",           "udp",            "unknown"};
    return names;
}

std::array<bool, kGroupingTagCount> grouping_tag_values(const GroupingTags& g) {
    return {g.darknet_web,     g.darknet_remote,        g.darknet_mssql,  g.darknet_samba,
            g.darknet_rdp,     g.darknet_quote,         g.darknet_p2p,    g.darknet_amplification,
            g.censys_web,      g.censys_remote,         g.censys_mssql,   g.censys_samba,
            g.censys_embedded, g.censys_mgmt,           g.censys_storage, g.censys_amplification,
            g.scanning,        g.backscatter,           g.udp,            g.unknown};
}

}  // namespace darknet
