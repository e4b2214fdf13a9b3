#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "darknet/enrich.hpp"
#include "darknet/packet.hpp"

namespace darknet {

// UTC calendar date; events straddling midnight belong to first_seen's day.
struct CalendarDay {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    bool operator==(const CalendarDay&) const = default;
    auto operator<=>(const CalendarDay&) const = default;

    std::string iso() const;  // "YYYY-MM-DD"
};

CalendarDay day_of_timestamp(double epoch_seconds);
CalendarDay parse_day(const std::string& iso);

// One source IP's daily aggregate: Table-style behavioral features plus
// annotations and the interpretation grouping.
struct ScannerProfile {
    std::uint32_t src_ip = 0;
    CalendarDay day;
    std::uint64_t total_packets = 0;
    std::uint64_t total_bytes = 0;
    double total_lifetime = 0.0;  // sum of event lifetimes, seconds
    std::uint64_t num_ports = 0;
    double avg_lifetime = 0.0;
    double avg_packet_size = 0.0;
    std::set<std::string> protocols;  // flag-class signatures ("SYN", "UDP", ...)
    std::set<std::uint16_t> ports;
    std::uint64_t min_unique_dsts = 0;
    std::uint64_t max_unique_dsts = 0;
    std::uint64_t min_unique_dst24 = 0;
    std::uint64_t max_unique_dst24 = 0;
    std::set<std::uint16_t> censys_ports;
    std::set<std::string> censys_tags;
    bool has_censys = false;
    std::string country = "--";
    std::string asn = "AS0";
    std::string dns;  // optional pass-through annotation, never featurized
    GroupingTags grouping;
    bool mirai = false;
    std::map<TrafficClass, std::uint64_t> class_mix;  // packets per class
};

// Group one day's events by source; empty input gives an empty list.
// Output ordered by src_ip for reproducible files.
std::vector<ScannerProfile> aggregate_daily(const std::vector<DarknetEvent>& events,
                                            const Annotations& annotations);

}  // namespace darknet
