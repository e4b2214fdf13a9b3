#include "darknet/profile.hpp"

#include <algorithm>
#include <cstdio>

#include "darknet/common.hpp"

namespace darknet {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return d[m - 1];
}

}  // namespace

std::string CalendarDay::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

CalendarDay day_of_timestamp(double epoch_seconds) {
    auto days = static_cast<std::int64_t>(epoch_seconds / 86400.0);
    if (epoch_seconds < 0 && days * 86400.0 > epoch_seconds) --days;
    CalendarDay d{1970, 1, 1};
    std::int64_t remaining = days;
    while (remaining >= (is_leap(d.year) ? 366 : 365)) {
        remaining -= is_leap(d.year) ? 366 : 365;
        ++d.year;
    }
    while (remaining < 0) {
        --d.year;
        remaining += is_leap(d.year) ? 366 : 365;
    }
    while (remaining >= days_in_month(d.year, d.month)) {
        remaining -= days_in_month(d.year, d.month);
        ++d.month;
    }
    d.day = static_cast<int>(remaining) + 1;
    return d;
}

CalendarDay parse_day(const std::string& iso) {
    CalendarDay d;
    if (std::sscanf(iso.c_str(), "%d-%d-%d", &d.year, &d.month, &d.day) != 3 || d.month < 1 ||
        d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month))
        throw InputError("malformed date: " + iso);
    return d;
}

std::vector<ScannerProfile> aggregate_daily(const std::vector<DarknetEvent>& events,
                                            const Annotations& annotations) {
    std::map<std::uint32_t, std::vector<const DarknetEvent*>> by_src;
    for (const auto& ev : events) by_src[ev.key.src_ip].push_back(&ev);

    std::vector<ScannerProfile> profiles;
    profiles.reserve(by_src.size());
    for (auto& [src, evs] : by_src) {
        ScannerProfile p;
        p.src_ip = src;
        p.day = day_of_timestamp(evs.front()->first_seen);
        std::set<TrafficClass> classes;
        p.min_unique_dsts = p.min_unique_dst24 = UINT64_MAX;
        for (const DarknetEvent* ev : evs) {
            p.total_packets += ev->packets;
            p.total_bytes += ev->bytes;
            p.total_lifetime += ev->lifetime();
            p.protocols.insert(ev->key.flags_sig);
            p.ports.insert(ev->key.dst_port);
            p.min_unique_dsts = std::min(p.min_unique_dsts, ev->unique_dsts);
            p.max_unique_dsts = std::max(p.max_unique_dsts, ev->unique_dsts);
            p.min_unique_dst24 = std::min(p.min_unique_dst24, ev->unique_dst24);
            p.max_unique_dst24 = std::max(p.max_unique_dst24, ev->unique_dst24);
            if (ev->mirai_packets > 0) p.mirai = true;
            classes.insert(ev->key.traffic_class);
            p.class_mix[ev->key.traffic_class] += ev->packets;
        }
        p.num_ports = p.ports.size();
        p.avg_lifetime = p.total_lifetime / static_cast<double>(evs.size());
        p.avg_packet_size = static_cast<double>(p.total_bytes) / static_cast<double>(p.total_packets);
        p.country = annotations.country_of(src);
        p.asn = annotations.asn_of(src);
        p.dns = annotations.dns_of(src);
        auto censys = annotations.censys_of(src);
        if (censys) {
            p.has_censys = true;
            p.censys_ports = censys->open_ports;
            p.censys_tags = censys->tags;
        }
        p.grouping = grouping_tags(p.ports, censys, classes);
        profiles.push_back(std::move(p));
    }
    return profiles;
}

}  // namespace darknet
