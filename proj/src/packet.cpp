#include "darknet/packet.hpp"

#include "darknet/common.hpp"

namespace darknet {

const char* traffic_class_name(TrafficClass c) {
    switch (c) {
        case TrafficClass::Scanning: return "Scanning";
        case TrafficClass::Backscatter: return "Backscatter";
        case TrafficClass::Udp: return "UDP";
        case TrafficClass::Unknown: return "Unknown";
    }
    return "Unknown";
}

TrafficClass traffic_class_from_name(const std::string& name) {
    if (name == "Scanning") return TrafficClass::Scanning;
    if (name == "Backscatter") return TrafficClass::Backscatter;
    if (name == "UDP") return TrafficClass::Udp;
    if (name == "Unknown") return TrafficClass::Unknown;
    throw InputError("unknown traffic class: " + name);
}

TrafficClass classify_packet(const PacketRecord& pkt) {
    using namespace tcpflag;
    switch (pkt.protocol) {
        case Protocol::TCP: {
            const std::uint8_t f = pkt.tcp_flags;
            if (f == SYN) return TrafficClass::Scanning;
            if (f == (SYN | ACK) || f == RST || f == (RST | ACK) || f == ACK || f == (FIN | ACK))
                return TrafficClass::Backscatter;
            return TrafficClass::Unknown;
        }
        case Protocol::ICMP:
            if (pkt.icmp_type == 8) return TrafficClass::Scanning;
            if (pkt.icmp_type == 0 || pkt.icmp_type == 3 || pkt.icmp_type == 11)
                return TrafficClass::Backscatter;
            return TrafficClass::Unknown;
        case Protocol::UDP:
            return TrafficClass::Udp;
        case Protocol::OTHER:
            return TrafficClass::Unknown;
    }
    return TrafficClass::Unknown;
}

std::string flags_signature(const PacketRecord& pkt) {
    switch (pkt.protocol) {
        case Protocol::UDP:
            return "UDP";
        case Protocol::ICMP:
            return "ICMP-" + std::to_string(pkt.icmp_type);
        case Protocol::OTHER:
            return "PROTO-" + std::to_string(pkt.other_proto);
        case Protocol::TCP:
            break;
    }
    static constexpr const char* names[8] = {"FIN", "SYN", "RST", "PSH", "ACK", "URG", "ECE", "CWR"};
    std::string sig;
    for (int bit = 0; bit < 8; ++bit) {
        if (pkt.tcp_flags & (1u << bit)) {
            if (!sig.empty()) sig += '-';
            sig += names[bit];
        }
    }
    return sig.empty() ? "NONE" : sig;
}

bool mirai_fingerprint(const PacketRecord& pkt) {
    return pkt.protocol == Protocol::TCP && pkt.tcp_seq == pkt.dst_ip;
}

bool zmap_fingerprint(const PacketRecord& pkt) { return pkt.ip_id == 54321; }

bool masscan_fingerprint(const PacketRecord& pkt) {
    if (pkt.protocol != Protocol::TCP) return false;
    std::uint32_t mix = pkt.dst_ip ^ pkt.dst_port ^ pkt.tcp_seq;
    return pkt.ip_id == static_cast<std::uint16_t>(mix & 0xffff);
}

std::size_t EventKeyHash::operator()(const EventKey& k) const {
    std::uint64_t h = fnv1a64(k.flags_sig);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&k.src_ip), sizeof(k.src_ip)), h);
    h ^= static_cast<std::uint64_t>(k.traffic_class) << 17;
    h ^= static_cast<std::uint64_t>(k.dst_port) << 32;
    return static_cast<std::size_t>(h * 0x9e3779b97f4a7c15ull);
}

}  // namespace darknet
