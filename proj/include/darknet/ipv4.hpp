#pragma once

#include <cstdint>
#include <string>

namespace darknet {

// Dotted-quad <-> host-order uint32. Throws InputError on malformed input.
std::uint32_t parse_ipv4(const std::string& s);
std::string format_ipv4(std::uint32_t ip);

inline std::uint32_t prefix24(std::uint32_t ip) { return ip >> 8; }

struct CidrPrefix {
    std::uint32_t base = 0;
    int length = 0;  // 0..32

    bool contains(std::uint32_t ip) const {
        if (length == 0) return true;
        std::uint32_t mask = length == 32 ? 0xffffffffu : ~((1u << (32 - length)) - 1u);
        return (ip & mask) == (base & mask);
    }
};

// "a.b.c.d/len"; bare address means /32.
CidrPrefix parse_cidr(const std::string& s);

}  // namespace darknet
