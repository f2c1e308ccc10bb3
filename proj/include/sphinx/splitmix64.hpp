#pragma once

#include <cstdint>

namespace sphinx {

/// SplitMix64: a 64-bit counter passed through a two-multiply mixer.
/// Used both as the mask keystream and as the seedable generator behind
/// every randomized decision, so results are bit-identical across
/// platforms (std distributions are implementation-defined).
class SplitMix64 {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    constexpr SplitMix64() noexcept = default;
    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept
    {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t operator()() noexcept
    {
        state_ += kGolden;
        return mix(state_);
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0;
};

/// Order-sensitive combination of seed material into a fresh seed.
constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept
{
    return SplitMix64::mix(seed ^ SplitMix64::mix(value + SplitMix64::kGolden));
}

/// Small deterministic sampling layer over SplitMix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : gen_(seed) {}

    std::uint64_t next() noexcept { return gen_(); }

    /// Uniform integer in [0, bound). bound must be nonzero.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        // Lemire's multiply-shift with rejection of the biased low zone.
        __extension__ using u128 = unsigned __int128;
        u128 m = static_cast<u128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<u128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept
    {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(below(span));
    }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    SplitMix64 gen_;
};

} // namespace sphinx
