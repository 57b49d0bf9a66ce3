#pragma once

#include <cstdint>

namespace fe {

/// Deterministic splitmix64 generator. Used everywhere randomness is needed
/// so that (seed, config) fully determines results on any platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed (e.g. per task index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 g(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
    return g.next();
}

}  // namespace fe
