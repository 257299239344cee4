#pragma once

#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace nlrecon::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Child seed of `parent` for the sub-stream named by `tag`. Children of one
/// parent are independent of the order in which they are requested.
constexpr std::uint64_t derive(std::uint64_t parent, std::uint64_t tag) {
    return mix64(mix64(parent) ^ mix64(tag + 0x632BE59BD9B4E019ULL));
}
constexpr std::uint64_t derive(std::uint64_t parent, std::string_view tag) {
    return derive(parent, hash_tag(tag));
}

/// SplitMix64 sequence: word k is mix64(state + k * golden). Satisfies
/// UniformRandomBitGenerator.
class SplitMixStream {
public:
    using result_type = std::uint64_t;

    explicit SplitMixStream(std::uint64_t state) : state_(state) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += kGolden;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/**
 * Counter-based generator: row r of key k is the SplitMix64 sequence started
 * at mix64(mix64(k) + r * 0xD1B54A32D192ED03). Every value is a pure function
 * of (key, row, position), so any partition of rows across workers yields
 * the same numbers.
 */
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(mix64(key)) {}

    SplitMixStream stream(std::uint64_t row) const {
        return SplitMixStream(mix64(key_ + row * 0xD1B54A32D192ED03ULL));
    }

    /// Uniform in the open interval (0, 1).
    static double to_unit(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

    /// Fills `out` with standard normals drawn from row `row` (ziggurat).
    void normals(std::uint64_t row, std::span<double> out) const {
        SplitMixStream s = stream(row);
        boost::random::normal_distribution<double> normal;
        for (double& z : out) z = normal(s);
    }

    /// Uniform integer in [0, n) from row `row`.
    std::uint64_t below(std::uint64_t row, std::uint64_t n) const {
        SplitMixStream s = stream(row);
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(s()) * n) >> 64);
    }

private:
    std::uint64_t key_;
};

}  // namespace nlrecon::rng
