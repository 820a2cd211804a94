#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace prhr {

// Counter-based random stream. Every draw is a pure function of
// (seed, stream name, up to four integer indices), so any single value can be
// regenerated in isolation and the draw order never matters.
class CounterRng {
  public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    uint64_t bits(std::string_view name, int64_t a = 0, int64_t b = 0, int64_t c = 0,
                  int64_t d = 0) const {
        uint64_t h = mix(seed_ ^ 0x9e3779b97f4a7c15ull);
        h = mix(h ^ fnv1a(name));
        h = mix(h ^ static_cast<uint64_t>(a));
        h = mix(h ^ static_cast<uint64_t>(b));
        h = mix(h ^ static_cast<uint64_t>(c));
        h = mix(h ^ static_cast<uint64_t>(d));
        return h;
    }

    // Uniform in [0, 1).
    double u01(std::string_view name, int64_t a = 0, int64_t b = 0, int64_t c = 0,
               int64_t d = 0) const {
        return static_cast<double>(bits(name, a, b, c, d) >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi, std::string_view name, int64_t a = 0, int64_t b = 0,
                   int64_t c = 0, int64_t d = 0) const {
        return lo + (hi - lo) * u01(name, a, b, c, d);
    }

    // Standard normal via Box-Muller on two sub-draws of the same counter.
    double normal(std::string_view name, int64_t a = 0, int64_t b = 0, int64_t c = 0,
                  int64_t d = 0) const {
        uint64_t h = bits(name, a, b, c, d);
        double u1 = static_cast<double>(mix(h) >> 11) * 0x1.0p-53;
        double u2 = static_cast<double>(mix(h ^ 0xda3e39cb94b95bdbull) >> 11) * 0x1.0p-53;
        if (u1 <= 0x1.0p-60) u1 = 0x1.0p-60;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    uint64_t seed() const { return seed_; }

  private:
    static uint64_t mix(uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t fnv1a(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ull;
        for (char ch : s) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ull;
        }
        return h;
    }

    uint64_t seed_;
};

}  // namespace prhr
