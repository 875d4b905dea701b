#pragma once

#include <cmath>
#include <cstdint>

#include <boost/math/special_functions/erf.hpp>

namespace gplm::rng {

/// SplitMix64 output finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Counter-based generator.
///
/// Draw k of a stream with key K is mix64(K + (k + 1) * 0x9E3779B97F4A7C15),
/// i.e. a SplitMix64 sequence whose state is a pure function of (key, k).
/// Substreams derive a fresh key from (parent key, id) through mix64, so any
/// job can reconstruct its own stream from the master seed and its indices
/// without touching shared state.
class Stream {
public:
    explicit Stream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
        : key_(mix64(mix64(seed ^ 0x6A09E667F3BCC909ULL) + mix64(stream_id + 0x3C6EF372FE94F82BULL))) {}

    Stream substream(std::uint64_t id) const noexcept {
        Stream s(0);
        s.key_ = mix64(key_ ^ mix64(id + 0xA54FF53A5F1D36F1ULL));
        return s;
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal by inverse CDF.
    double normal() {
        const double u = uniform();
        return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Standard logistic by inverse CDF.
    double logistic() noexcept {
        const double u = uniform();
        return std::log(u) - std::log1p(-u);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Bi(m, p) as a sum of m Bernoulli draws.
    int binomial(int m, double p) noexcept {
        int k = 0;
        for (int j = 0; j < m; ++j) k += bernoulli(p) ? 1 : 0;
        return k;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace gplm::rng
