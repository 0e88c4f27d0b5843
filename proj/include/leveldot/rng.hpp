#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace leveldot {

/// Identifies one realization: the run's master seed plus the realization
/// index. Everything random about a realization is a pure function of this.
struct SeedPath {
    std::uint64_t master = 0;
    std::uint64_t index = 0;

    friend bool operator==(const SeedPath&, const SeedPath&) = default;
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The key is derived from (master seed, stream tag); the counter holds the
/// realization index in its upper half and a running block number in its
/// lower half. Distinct (master, index, tag) triples therefore never share
/// output, and a substream can be regenerated in isolation.
class PhiloxStream {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    PhiloxStream(SeedPath path, std::uint32_t stream_tag);

    /// Raw block function, exposed for known-answer tests.
    static Block philox4x32_10(Block counter, Key key);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform double in the open interval (0, 1), 53 random bits.
    double uniform();

    /// Standard normal deviate (Box-Muller, second value cached).
    double normal();

private:
    void refill();

    Key key_{};
    std::uint64_t index_ = 0;
    std::uint64_t block_ = 0;
    Block buffer_{};
    int cursor_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to spread seeds into Philox keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream tags; one per independent random ingredient of a realization.
inline constexpr std::uint32_t kDotStream = 1;
inline constexpr std::uint32_t kCouplingStream = 2;

}  // namespace leveldot
