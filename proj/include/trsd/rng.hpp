#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace trsd {

// Counter-based randomness. Every consumer derives its own stream key from
// (root seed, substream name, counters), so results do not depend on how work
// is scheduled across workers.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_key(uint64_t key, uint64_t value) {
    return splitmix64(key ^ (value + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2)));
}

inline uint64_t mix_key(uint64_t key, std::string_view name) {
    uint64_t h = key;
    for (char c : name) {
        h = mix_key(h, static_cast<uint64_t>(static_cast<unsigned char>(c)));
    }
    return h;
}

template <typename... Parts>
uint64_t stream_key(uint64_t seed, Parts... parts) {
    uint64_t k = splitmix64(seed);
    ((k = mix_key(k, parts)), ...);
    return k;
}

// Small deterministic generator over a derived key. splitmix64 over an
// incrementing counter; state is just (key, counter).
class Rng {
public:
    explicit Rng(uint64_t key) : key_(key) {}

    uint64_t next_u64() { return splitmix64(key_ + counter_++); }

    // uniform on [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection to avoid modulo bias
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) {
            x = next_u64();
        }
        return x % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Box-Muller, hand-rolled so streams are identical across platforms
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace trsd
