#pragma once

#include <cstdint>
#include <random>

namespace fuseate {

/// SplitMix64 finalizer. Used only for seed derivation, never as a stream.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of substream `stream` under `seed`. Substreams nest:
/// derive_seed(derive_seed(s, cell), replication) is how the harness names a
/// replication inside a grid cell.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Portable random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The transforms below are written out here because the standard
/// library distributions are implementation-defined:
///   uniform()  = ((u64 >> 11) + 0.5) * 2^-53, so the result is in (0, 1)
///   normal()   = Box-Muller on two uniforms, second variate cached
///   bernoulli(p) = uniform() < p
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, bound), bound > 0, by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace fuseate
