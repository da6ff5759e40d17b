#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace semdpo {

// splitmix64 (Vigna 2015). The single PRNG used by the whole project so that
// every run is reproducible bit-for-bit from its seed, on any platform.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]; safe as a log() argument
    double u01_open_zero() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; consumes exactly two draws
    double gaussian() {
        const double u1 = u01_open_zero();
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // uniform integer in [0, n); n >= 1
    std::uint64_t below(std::uint64_t n) { return next() % n; }

private:
    std::uint64_t state_;
};

// Per-item stream: stage_seed xor item index. Items can then be processed in
// any order (or in parallel) without changing what each item draws.
inline Prng item_stream(std::uint64_t stage_seed, std::uint64_t index) {
    return Prng(stage_seed ^ index);
}

// Each pipeline stage gets its own stream family so stages never share or
// reorder each other's draws. The tag constants are arbitrary but frozen.
inline std::uint64_t derive_stage_seed(std::uint64_t master_seed, std::uint64_t tag) {
    return Prng(master_seed ^ tag).next();
}

namespace stage {
constexpr std::uint64_t kPrompts     = 0x5d0a117e00000001ULL;
constexpr std::uint64_t kEvalPrompts = 0x5d0a117e00000002ULL;
constexpr std::uint64_t kSftCorpus   = 0x5d0a117e00000003ULL;
constexpr std::uint64_t kSftInit     = 0x5d0a117e00000004ULL;
constexpr std::uint64_t kSftShuffle  = 0x5d0a117e00000005ULL;
constexpr std::uint64_t kPrefBuild   = 0x5d0a117e00000006ULL;
constexpr std::uint64_t kTrainInit   = 0x5d0a117e00000007ULL;
constexpr std::uint64_t kTrainShuffle = 0x5d0a117e00000008ULL;
constexpr std::uint64_t kT2iEval     = 0x5d0a117e00000009ULL;
constexpr std::uint64_t kProp2       = 0x5d0a117e0000000aULL;
} // namespace stage

// Fisher-Yates, one draw per position from the back.
template <typename T>
void shuffle(std::span<T> items, Prng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace semdpo
