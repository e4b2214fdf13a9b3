#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace darknet {

inline constexpr const char* kToolVersion = "0.1.0";

// Bad files, malformed records, inconsistent arguments. CLI exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Divergence, infeasible solves, dimension guards. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a 64-bit, used for schema fingerprints and manifest digests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace darknet
