#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace pslab {

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic PRNG used everywhere instead of <random>: the standard
// distributions are not bit-specified across library implementations, and
// every run here must be byte-reproducible.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// One-shot mix of a seed with purpose/index tags. Used for the seed-splitting
// scheme: derive_seed(root, PURPOSE, i, j) never collides across purposes in
// practice and keeps independent randomness streams independent of each other
// (toggling jitter does not perturb initialization).
inline uint64_t derive_seed(uint64_t root, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t s = root;
    splitmix64(s);
    s ^= 0x6a09e667f3bcc908ULL + tag;
    splitmix64(s);
    s ^= 0xbb67ae8584caa73bULL + a;
    splitmix64(s);
    s ^= 0x3c6ef372fe94f82bULL + b;
    return splitmix64(s);
}

// Purpose tags for derive_seed.
namespace seed_purpose {
inline constexpr uint64_t kParamInit = 1;
inline constexpr uint64_t kDataset = 2;
inline constexpr uint64_t kShuffle = 3;
inline constexpr uint64_t kJitter = 4;
inline constexpr uint64_t kEvalSplit = 5;
inline constexpr uint64_t kSynthGrad = 6;
}  // namespace seed_purpose

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // Warm up so near-zero seeds still produce well-mixed streams.
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n). n must be > 0.
    uint64_t next_below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller. The second value of each pair is
    // discarded; parity of calls then never changes downstream draws.
    double normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace pslab
