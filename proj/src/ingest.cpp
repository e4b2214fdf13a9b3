#include "darknet/ingest.hpp"

#include <algorithm>

#include "darknet/common.hpp"
#include "darknet/ipv4.hpp"

namespace darknet {

EventCache::EventCache(IngestConfig cfg, Sink sink) : cfg_(cfg), sink_(std::move(sink)) {
    if (cfg_.timeout <= 0) throw InputError("ingest timeout must be positive");
    if (cfg_.slack < 0) throw InputError("ingest slack must be non-negative");
}

void EventCache::emit(LiveEvent& live) {
    live.ev.unique_dsts = live.dsts.size();
    live.ev.unique_dst24 = live.dst24s.size();
    sink_(live.ev);
}

void EventCache::sweep(double now) {
    std::vector<EventKey> expired;
    for (auto& [key, live] : cache_) {
        if (now - live.ev.last_seen > cfg_.timeout) expired.push_back(key);
    }
    std::sort(expired.begin(), expired.end(), [&](const EventKey& a, const EventKey& b) {
        const auto& ea = cache_.at(a).ev;
        const auto& eb = cache_.at(b).ev;
        if (ea.first_seen != eb.first_seen) return ea.first_seen < eb.first_seen;
        return a < b;
    });
    for (const auto& key : expired) {
        emit(cache_.at(key));
        cache_.erase(key);
    }
}

void EventCache::push(const PacketRecord& pkt) {
    if (pkt.timestamp < max_time_seen_ - cfg_.slack) {
        ++stats_.rejected_out_of_order;
        return;
    }
    ++stats_.accepted;
    max_time_seen_ = std::max(max_time_seen_, pkt.timestamp);

    if (last_sweep_ < -1e299) last_sweep_ = pkt.timestamp;
    if (max_time_seen_ - last_sweep_ >= kSweepInterval) {
        sweep(max_time_seen_);
        last_sweep_ = max_time_seen_;
    }

    EventKey key{pkt.src_ip, classify_packet(pkt), flags_signature(pkt), pkt.dst_port};
    auto it = cache_.find(key);
    if (it != cache_.end() && pkt.timestamp - it->second.ev.last_seen > cfg_.timeout) {
        // lazy expiry on key access
        emit(it->second);
        cache_.erase(it);
        it = cache_.end();
    }
    if (it == cache_.end()) {
        LiveEvent live;
        live.ev.key = key;
        live.ev.first_seen = pkt.timestamp;
        live.ev.last_seen = pkt.timestamp;
        it = cache_.emplace(std::move(key), std::move(live)).first;
    }

    LiveEvent& live = it->second;
    DarknetEvent& ev = live.ev;
    ev.first_seen = std::min(ev.first_seen, pkt.timestamp);
    ev.last_seen = std::max(ev.last_seen, pkt.timestamp);
    ev.packets += 1;
    ev.bytes += pkt.packet_bytes;
    if (mirai_fingerprint(pkt)) ev.mirai_packets += 1;
    if (zmap_fingerprint(pkt)) ev.zmap_packets += 1;
    if (masscan_fingerprint(pkt)) ev.masscan_packets += 1;
    live.dsts.insert(pkt.dst_ip);
    live.dst24s.insert(prefix24(pkt.dst_ip));
}

void EventCache::flush() {
    std::vector<EventKey> keys;
    keys.reserve(cache_.size());
    for (auto& [key, live] : cache_) keys.push_back(key);
    std::sort(keys.begin(), keys.end(), [&](const EventKey& a, const EventKey& b) {
        const auto& ea = cache_.at(a).ev;
        const auto& eb = cache_.at(b).ev;
        if (ea.first_seen != eb.first_seen) return ea.first_seen < eb.first_seen;
        return a < b;
    });
    for (const auto& key : keys) emit(cache_.at(key));
    cache_.clear();
}

std::vector<DarknetEvent> ingest(const std::vector<PacketRecord>& packets, const IngestConfig& cfg,
                                 IngestStats* stats) {
    std::vector<DarknetEvent> out;
    EventCache cache(cfg, [&](const DarknetEvent& ev) { out.push_back(ev); });
    for (const auto& pkt : packets) cache.push(pkt);
    cache.flush();
    if (stats) *stats = cache.stats();
    return out;
}

}  // namespace darknet
