#pragma once

#include <cstdint>
#include <string>

namespace darknet {

enum class Protocol : std::uint8_t { TCP, UDP, ICMP, OTHER };

namespace tcpflag {
inline constexpr std::uint8_t FIN = 0x01;
inline constexpr std::uint8_t SYN = 0x02;
inline constexpr std::uint8_t RST = 0x04;
inline constexpr std::uint8_t PSH = 0x08;
inline constexpr std::uint8_t ACK = 0x10;
inline constexpr std::uint8_t URG = 0x20;
inline constexpr std::uint8_t ECE = 0x40;
inline constexpr std::uint8_t CWR = 0x80;
}  // namespace tcpflag

struct PacketRecord {
    double timestamp = 0.0;  // seconds since epoch, fractional
    std::uint32_t src_ip = 0;
    std::uint32_t dst_ip = 0;
    Protocol protocol = Protocol::TCP;
    std::uint8_t other_proto = 0;  // IP protocol number when protocol == OTHER
    std::uint8_t tcp_flags = 0;    // valid iff TCP
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;  // 0 for ICMP
    std::uint32_t packet_bytes = 0;
    std::uint32_t tcp_seq = 0;  // valid iff TCP
    std::uint16_t ip_id = 0;
    std::uint8_t icmp_type = 0;  // valid iff ICMP
};

enum class TrafficClass : std::uint8_t { Scanning, Backscatter, Udp, Unknown };

const char* traffic_class_name(TrafficClass c);
TrafficClass traffic_class_from_name(const std::string& name);

// Scanning: TCP with flags exactly SYN, or ICMP echo request (type 8).
// Backscatter: TCP flags in {SYN-ACK, RST, RST-ACK, ACK, FIN-ACK} or ICMP type in {0,3,11}.
// UDP: protocol UDP. Everything else: Unknown. Total function.
TrafficClass classify_packet(const PacketRecord& pkt);

// Canonical flag-class string keying events: "SYN", "SYN-ACK", "ICMP-8", "UDP",
// "PROTO-47", ... TCP flags listed in bit order (FIN, SYN, RST, PSH, ACK, URG, ECE, CWR).
std::string flags_signature(const PacketRecord& pkt);

// TCP probe whose sequence number equals the destination address.
bool mirai_fingerprint(const PacketRecord& pkt);
// IP ID pinned to 54321.
bool zmap_fingerprint(const PacketRecord& pkt);
// IP ID = (dst_ip ^ dst_port ^ tcp_seq) truncated to 16 bits; TCP only.
bool masscan_fingerprint(const PacketRecord& pkt);

struct EventKey {
    std::uint32_t src_ip = 0;
    TrafficClass traffic_class = TrafficClass::Unknown;
    std::string flags_sig;
    std::uint16_t dst_port = 0;

    bool operator==(const EventKey&) const = default;
    auto operator<=>(const EventKey&) const = default;
};

struct EventKeyHash {
    std::size_t operator()(const EventKey& k) const;
};

struct DarknetEvent {
    EventKey key;
    double first_seen = 0.0;
    double last_seen = 0.0;
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
    std::uint64_t unique_dsts = 0;
    std::uint64_t unique_dst24 = 0;
    std::uint64_t mirai_packets = 0;
    std::uint64_t zmap_packets = 0;
    std::uint64_t masscan_packets = 0;

    double lifetime() const { return last_seen - first_seen; }
};

}  // namespace darknet
