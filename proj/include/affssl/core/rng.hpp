#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace affssl {

// Counter-based seed derivation. Every random decision in the pipeline owns
// a stream derived from (global seed, purpose tag, indices...), so replay and
// resume never depend on how many draws other components made.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x243f6a8885a308d3ULL;
    for (uint64_t p : parts) h = splitmix64(h ^ p);
    return h;
}

// Stream purpose tags, kept distinct so e.g. the affine branch never
// perturbs the augmentation stream (beta2=0 must match the module-free path).
namespace stream {
constexpr uint64_t kInit = 0x11;
constexpr uint64_t kShuffle = 0x22;
constexpr uint64_t kAugment = 0x33;
constexpr uint64_t kAffine = 0x44;
constexpr uint64_t kProbe = 0x55;
}  // namespace stream

using Rng = std::mt19937_64;

inline Rng make_rng(std::initializer_list<uint64_t> parts) { return Rng(mix_seed(parts)); }

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace affssl
