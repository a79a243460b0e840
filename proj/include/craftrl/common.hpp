#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace craftrl {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error("value error: " + msg) {}
};

struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

// Format errors carry the index of the record that failed to parse (-1 = header).
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, long record_index)
        : std::runtime_error("format error: " + msg + " (record " + std::to_string(record_index) + ")"),
          record(record_index) {}
    long record;
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct ClusteringError : std::runtime_error {
    explicit ClusteringError(const std::string& msg) : std::runtime_error("clustering error: " + msg) {}
};

// FNV-1a, used for config hashes and parameter-freeze assertions.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t fnv1a_str(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace craftrl
