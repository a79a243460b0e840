#pragma once

// Deterministic RNG used everywhere instead of <random> distributions:
// std::uniform_*_distribution is implementation-defined, which would break
// the byte-identical determinism contract across standard libraries.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "craftrl/common.hpp"

namespace craftrl {

// PCG32 (Melissa O'Neill's minimal variant).
class Rng {
public:
    explicit Rng(uint64_t seed = 0, uint64_t stream = 1) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 1) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
        has_spare_ = false;
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Unbiased bounded integer in [0, bound) via rejection sampling.
    uint32_t uniform_u32(uint32_t bound) {
        if (bound == 0) return 0;
        uint32_t threshold = (-bound) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    size_t index(size_t n) { return static_cast<size_t>(uniform_u32(static_cast<uint32_t>(n))); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with cached spare.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Named substream derivation: every component seeds its own Rng from the
// root seed plus a label, so adding a consumer never shifts another's stream.
inline uint64_t derive_seed(uint64_t root, const std::string& label, uint64_t index = 0) {
    uint64_t h = fnv1a(&root, sizeof(root));
    h = fnv1a_str(label, h);
    h = fnv1a(&index, sizeof(index), h);
    return h;
}

}  // namespace craftrl
