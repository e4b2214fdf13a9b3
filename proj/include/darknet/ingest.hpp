#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "darknet/packet.hpp"

namespace darknet {

struct IngestConfig {
    double timeout = 600.0;  // inactivity before an event expires, seconds
    double slack = 5.0;      // tolerated backwards jump in timestamps, seconds
};

struct IngestStats {
    std::uint64_t accepted = 0;
    std::uint64_t rejected_out_of_order = 0;
};

// Streaming (src_ip, flag class, dst_port) event cache with inactivity expiry.
// One logical sequential pass; expired events are handed to the sink in a
// canonical order (sorted by first_seen, then key) so replay is deterministic.
class EventCache {
public:
    using Sink = std::function<void(const DarknetEvent&)>;

    explicit EventCache(IngestConfig cfg, Sink sink);

    // Packets must be fed in non-decreasing timestamp order up to `slack`;
    // anything staler is counted and dropped.
    void push(const PacketRecord& pkt);

    // Emits every live event; call once at end of stream.
    void flush();

    const IngestStats& stats() const { return stats_; }

private:
    struct LiveEvent {
        DarknetEvent ev;
        std::unordered_set<std::uint32_t> dsts;
        std::unordered_set<std::uint32_t> dst24s;
    };

    void emit(LiveEvent& live);
    void sweep(double now);

    IngestConfig cfg_;
    Sink sink_;
    IngestStats stats_;
    std::unordered_map<EventKey, LiveEvent, EventKeyHash> cache_;
    double max_time_seen_ = -1e300;
    double last_sweep_ = -1e300;

    static constexpr double kSweepInterval = 60.0;
};

// Convenience wrapper: run the whole stream through a cache, return events.
std::vector<DarknetEvent> ingest(const std::vector<PacketRecord>& packets,
                                 const IngestConfig& cfg = {}, IngestStats* stats = nullptr);

}  // namespace darknet
