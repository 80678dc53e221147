#pragma once

#include <cstdint>
#include <random>

namespace survmpl {

// splitmix64: used to derive independent, well-mixed seeds from (seed, index)
// pairs so replication streams are identical regardless of worker count.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic uniform generator. std::mt19937_64 output is fully specified
// by the standard; the uniform mapping below is our own, so streams are
// bit-reproducible across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    Rng(std::uint64_t seed, std::uint64_t stream)
        : eng_(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)))) {}

    // Uniform on the open interval (0, 1): never returns 0 or 1, so log(u)
    // and inverse-CDF transforms are always finite.
    double uniform() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

} // namespace survmpl
