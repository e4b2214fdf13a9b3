#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "darknet/ipv4.hpp"
#include "darknet/packet.hpp"

namespace darknet {

// Longest-prefix-match table over CIDR prefixes. Immutable once built;
// lookups are thread-safe.
class PrefixTable {
public:
    void add(const std::string& cidr, const std::string& value);
    void add(CidrPrefix prefix, std::string value);

    std::optional<std::string> lookup(std::uint32_t ip) const;
    std::optional<std::string> lookup(const std::string& ip) const;

    std::size_t size() const { return count_; }

private:
    // one exact-match map per prefix length; probe /32 down to /0
    std::array<std::map<std::uint32_t, std::string>, 33> by_length_;
    std::size_t count_ = 0;
};

struct CensysRecord {
    std::uint32_t ip = 0;
    std::set<std::uint16_t> open_ports;
    std::set<std::string> tags;  // lowercase
};

// One boolean per interpretation grouping. darknet:* derive from scanned
// ports, censys:* from host-intelligence tags, and the last four from the
// observed traffic-class mix.
struct GroupingTags {
    bool darknet_web = false;            // ports 80, 443, 81
    bool darknet_remote = false;         // ports 22, 23
    bool darknet_mssql = false;          // port 1433
    bool darknet_samba = false;          // port 445
    bool darknet_rdp = false;            // port string matches \d+3389\d+ (unanchored)
    bool darknet_quote = false;          // port 17
    bool darknet_p2p = false;            // port string matches 17\d\d\d (unanchored)
    bool darknet_amplification = false;  // ports 123, 53, 161, 137, 1900, 19, 27960, 27015
    bool censys_web = false;             // tags http, https
    bool censys_remote = false;          // tags ssh, telnet, remote
    bool censys_mssql = false;           // tag mssql
    bool censys_samba = false;           // tag smb
    bool censys_embedded = false;        // tags embedded, dsl, model, iot
    bool censys_mgmt = false;            // tags cwmp, snmp
    bool censys_storage = false;         // tags ftp, nas
    bool censys_amplification = false;   // tags dns, ntp, memcache
    bool scanning = false;
    bool backscatter = false;
    bool udp = false;
    bool unknown = false;

    bool operator==(const GroupingTags&) const = default;
};

// Stable order used for vectors, trees and serialization.
inline constexpr std::size_t kGroupingTagCount = 20;
const std::array<const char*, kGroupingTagCount>& grouping_tag_names();
std::array<bool, kGroupingTagCount> grouping_tag_values(const GroupingTags& tags);

// Regexes are matched unanchored against the decimal port string, mirroring
// the published rules verbatim. 17130 matches 17\d\d\d; no 16-bit port can
// match \d+3389\d+ (it needs digits on both sides of 3389).
bool port_matches_rdp(std::uint16_t port);
bool port_matches_p2p(std::uint16_t port);

GroupingTags grouping_tags(const std::set<std::uint16_t>& ports_scanned,
                           const std::optional<CensysRecord>& censys,
                           const std::set<TrafficClass>& classes);

// Snapshot bundle used when turning events into profiles. Unknown sources
// get "--" / "AS0" so downstream grouping never branches on absence.
struct Annotations {
    PrefixTable geo;
    PrefixTable asn;
    std::map<std::uint32_t, CensysRecord> censys;
    std::map<std::uint32_t, std::string> dns;  // optional pass-through names

    std::string country_of(std::uint32_t ip) const { return geo.lookup(ip).value_or("--"); }
    std::string asn_of(std::uint32_t ip) const { return asn.lookup(ip).value_or("AS0"); }
    std::optional<CensysRecord> censys_of(std::uint32_t ip) const {
        auto it = censys.find(ip);
        if (it == censys.end()) return std::nullopt;
        return it->second;
    }
    std::string dns_of(std::uint32_t ip) const {
        auto it = dns.find(ip);
        return it == dns.end() ? std::string() : it->second;
    }
};

}  // namespace darknet
