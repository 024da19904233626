#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace bpn {

/// Deterministic 64-bit PRNG (splitmix64). Chosen over std::mt19937_64 +
/// std::*_distribution because the standard leaves distribution output
/// unspecified; this generator produces identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe to feed into log().
    double next_unit_open() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (one value per call, no cached pair,
    /// so the stream position stays easy to reason about).
    double next_gaussian() {
        double u1 = next_unit_open();
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, n) via 128-bit multiply (no modulo bias path
    /// dependence; deterministic for a given stream).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Fisher-Yates shuffle with this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace detail

/// Derive an independent child stream from a base seed and a label path.
/// Components that must not share randomness (init, shuffling, bank
/// creation, ...) each get their own labelled split.
inline Rng split_rng(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                     std::uint64_t c = 0) {
    std::uint64_t h = detail::mix_u64(base, a);
    h = detail::mix_u64(h, b);
    h = detail::mix_u64(h, c);
    return Rng(h);
}

} // namespace bpn
