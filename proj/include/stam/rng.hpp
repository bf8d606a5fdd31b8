// Seeded RNG with self-contained distribution math. std::mt19937_64 is
// standard-defined bit-for-bit; the distribution helpers here avoid the
// implementation-defined std::*_distribution so seeded runs stay stable
// across toolchains.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stam {

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53 bits of precision.
    double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Inclusive [lo, hi], rejection sampled (no modulo bias).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = uint64_t(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return lo + int64_t(x % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01();  // avoid log(0)
        double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Deterministic substream derivation: FNV-1a over the tag mixed into the
    // seed, then splitmix-scrambled.
    static uint64_t derive(uint64_t seed, std::string_view tag, uint64_t salt = 0) {
        uint64_t h = 1469598103934665603ull;
        for (char c : tag) {
            h ^= uint64_t(uint8_t(c));
            h *= 1099511628211ull;
        }
        uint64_t z = seed ^ h ^ (salt * 0x9e3779b97f4a7c15ull);
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace stam
