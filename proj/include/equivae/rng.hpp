#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace equivae {

/// Deterministic 64-bit generator (xoshiro256++ seeded via splitmix64).
/// Self-contained on purpose: streams are bit-identical on every platform,
/// which the reproducibility contract depends on.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller (the spare draw is cached).
    double normal();

    /// Uniform integer in [0, n); n must be positive. Rejection sampling,
    /// so the result is unbiased.
    int64_t uniform_int(int64_t n);

    /// Independent stream derived from this generator's seed and a name.
    /// Derivation is a pure function of (seed, name): taking a sub-stream
    /// does not advance this generator.
    Rng sub_stream(std::string_view name) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_[4];
    uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace equivae
