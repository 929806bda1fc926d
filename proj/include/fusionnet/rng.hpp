#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fusionnet {

// Portable deterministic RNG used everywhere randomness is needed (parameter
// init, data shuffling, synthetic data). Fixed algorithm so fixtures and
// checkpoints reproduce bit-identically across platforms and standard library
// versions:
//   - state seeding: SplitMix64 (Steele/Lea/Flood 2014)
//   - stream: xoshiro256** (Blackman/Vigna 2018)
//   - uniform doubles: top 53 bits scaled by 2^-53
//   - normals: Box-Muller on two fresh uniforms, no cached spare
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    // Derives an independent stream for (seed, stream) pairs, e.g. per-epoch
    // shuffles. Mixing via SplitMix64 keeps nearby ids decorrelated.
    Rng(uint64_t seed, uint64_t stream) {
        uint64_t s = seed;
        s = splitmix64(s) ^ (stream + 0x9e3779b97f4a7c15ull);
        reseed(splitmix64(s));
    }

    void reseed(uint64_t seed) {
        uint64_t s = seed;
        for (auto& word : state_) {
            s += 0x9e3779b97f4a7c15ull;
            word = mix(s);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; draws two uniforms per sample so the
    // generator state fully determines the output sequence.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Unbiased integer in [0, n) by rejection on the top of the 64-bit range.
    uint64_t bounded(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates; permutation order depends only on the stream state.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (size_t i = items.size() - 1; i > 0; --i) {
            const size_t j = static_cast<size_t>(bounded(i + 1));
            std::swap(items[i], items[j]);
        }
    }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t splitmix64(uint64_t& s) {
        s += 0x9e3779b97f4a7c15ull;
        return mix(s);
    }

    std::array<uint64_t, 4> state_{};
};

} // namespace fusionnet
