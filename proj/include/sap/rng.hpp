#pragma once

#include <cstdint>
#include <string_view>

namespace sap {

/// xoshiro256** seeded through SplitMix64.
///
/// All draws are defined on the raw 64-bit output so results are identical on
/// every platform and standard library. Do not feed this into std::
/// distributions where reproducibility matters.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent stream for (seed, key), e.g. (run seed, doc_id).
    static Rng stream(std::uint64_t seed, std::string_view key);

    std::uint64_t next_u64() noexcept;

    /// Uniform integer in [0, bound), unbiased (Lemire multiply + rejection).
    std::uint64_t uniform_below(std::uint64_t bound) noexcept;

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() noexcept;

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (second variate cached).
    double normal() noexcept;

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace sap
