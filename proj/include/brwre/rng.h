#pragma once

#include <cstdint>
#include <limits>

namespace brwre {

// Purpose tags keep the environment stream, the branching stream and the
// various auxiliary streams disjoint even when they share a master seed.
enum class StreamPurpose : std::uint64_t {
    Environment = 0x01,
    Branching = 0x02,
    Spine = 0x03,
    Corridor = 0x04,
    GammaPath = 0x05,
    TubeMonteCarlo = 0x06,
    Auxiliary = 0x07,
    TestFunction = 0x08,
    LawMonteCarlo = 0x09,
    Scaling = 0x0a,
    Annealed = 0x0b,
};

std::uint64_t mix64(std::uint64_t x);

/// Hash of (master seed, purpose, index0, index1, index2) into a stream key.
/// Any single draw is reproducible from this tuple alone.
std::uint64_t streamKey(std::uint64_t master, StreamPurpose purpose, std::uint64_t index0 = 0,
                        std::uint64_t index1 = 0, std::uint64_t index2 = 0);

/// Counter-based generator: the i-th output is a pure function of (key, i).
/// Satisfies UniformRandomBitGenerator so it plugs into <random> distributions.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) : key_(key) {}
    CounterRng(std::uint64_t master, StreamPurpose purpose, std::uint64_t index0 = 0,
               std::uint64_t index1 = 0, std::uint64_t index2 = 0)
        : key_(streamKey(master, purpose, index0, index1, index2)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        ++counter_;
        return mix64(key_ + counter_ * kGolden);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1).
    double uniformOpen() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace brwre
