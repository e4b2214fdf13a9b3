#include "darknet/ipv4.hpp"

#include "darknet/common.hpp"

namespace darknet {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint32_t parse_ipv4(const std::string& s) {
    std::uint32_t parts[4];
    int part = 0;
    std::uint32_t acc = 0;
    int digits = 0;
    for (char c : s) {
        if (c >= '0' && c <= '9') {
            acc = acc * 10 + static_cast<std::uint32_t>(c - '0');
            ++digits;
            if (digits > 3 || acc > 255) throw InputError("malformed IPv4 address: " + s);
        } else if (c == '.') {
            if (digits == 0 || part >= 3) throw InputError("malformed IPv4 address: " + s);
            parts[part++] = acc;
            acc = 0;
            digits = 0;
        } else {
            throw InputError("malformed IPv4 address: " + s);
        }
    }
    if (part != 3 || digits == 0) throw InputError("malformed IPv4 address: " + s);
    parts[3] = acc;
    return (parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3];
}

std::string format_ipv4(std::uint32_t ip) {
    return std::to_string((ip >> 24) & 0xff) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

CidrPrefix parse_cidr(const std::string& s) {
    auto slash = s.find('/');
    if (slash == std::string::npos) return CidrPrefix{parse_ipv4(s), 32};
    CidrPrefix p;
    p.base = parse_ipv4(s.substr(0, slash));
    std::string lenstr = s.substr(slash + 1);
    if (lenstr.empty() || lenstr.size() > 2) throw InputError("malformed CIDR prefix: " + s);
    int len = 0;
    for (char c : lenstr) {
        if (c < '0' || c > '9') throw InputError("malformed CIDR prefix: " + s);
        len = len * 10 + (c - '0');
    }
    if (len > 32) throw InputError("malformed CIDR prefix: " + s);
    p.length = len;
    return p;
}

}  // namespace darknet
