#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace cupcur {

// Counter-based random stream. A stream is a (key, counter) pair; the i-th
// output is a pure function of both, so streams are cheap to snapshot and
// restore. Child streams are derived by hashing a name or index into the
// parent key, giving independent, seed-reproducible streams for init,
// dropout, shuffling and weight re-draws.
class RngStream {
public:
    RngStream() = default;

    static RngStream root(std::uint64_t seed) {
        RngStream s;
        s.key_ = mix(seed ^ 0x7c3a9d4fb1e02658ull);
        return s;
    }

    RngStream child(std::string_view name) const {
        RngStream s;
        s.key_ = mix(key_ ^ hash_name(name));
        return s;
    }

    RngStream child(std::uint64_t index) const {
        RngStream s;
        s.key_ = mix(key_ ^ mix(index ^ 0x9d8a2c5be4f1a3d7ull));
        return s;
    }

    std::uint64_t next_u64() { return mix(key_ ^ mix(counter_++)); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, bound) via rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    // SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static std::uint64_t hash_name(std::string_view name) {
        // FNV-1a
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return h;
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace cupcur
