#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace adaptkit {

// Deterministic 64-bit generator. The core step is splitmix64 (Steele,
// Lea & Flood, "Fast splittable pseudorandom number generators"): a Weyl
// sequence on the state followed by a 3-round mix. The integer stream is
// bit-identical on every platform; floating draws additionally depend on
// the platform's IEEE-754 double arithmetic and libm (log/cos/sin), which
// is stable across runs on a given toolchain.
//
// Gaussian draws use the Box-Muller transform: two uniforms (u, v) map to
//   z0 = sqrt(-2 ln u) * cos(2 pi v),  z1 = sqrt(-2 ln u) * sin(2 pi v).
// Both values are consumed in order; z1 is cached for the next call, so a
// sequence of n draws always consumes exactly ceil(n / 2) uniform pairs.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : base_seed_(seed), state_(seed) {}

    // splitmix64 step.
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random mantissa bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        // u must be in (0, 1] so that ln(u) is finite.
        double u = 1.0 - next_uniform();
        double v = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 2.0 * std::numbers::pi * v;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Unbiased integer in [0, n) via rejection sampling on the top range.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Fisher-Yates shuffle driven by next_below.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent stream keyed by a label. Derivation hashes the label
    // (FNV-1a) into the *base* seed, so derived streams do not depend on
    // how much of this stream has been consumed. Distinct labels give
    // decorrelated streams; the same label always gives the same stream.
    Rng derive(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        Rng child(base_seed_ ^ h);
        // One mixing step so that derive("x") on seed s differs from
        // construction with s ^ fnv("x") consumed zero times.
        child.state_ = child.next_u64();
        child.base_seed_ = child.state_;
        return child;
    }

    std::uint64_t base_seed() const { return base_seed_; }

   private:
    std::uint64_t base_seed_;
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace adaptkit
