#ifndef CALSIG_RNG_HPP
#define CALSIG_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace calsig {

/// Deterministic pseudo-random generator used everywhere randomness is needed.
///
/// The generator is splitmix64 (Steele, Lea & Flood 2014): each call advances
/// the 64-bit state by 0x9e3779b97f4a7c15 and returns a mixed copy of it.
/// Named sub-streams are derived by XORing the base seed with the FNV-1a 64
/// hash of the stream name, so every stage/cell gets an independent stream
/// from the single run seed. See docs/FORMATS.md for the full algorithm spec.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Sub-stream derived from a base seed and a stream name.
    static Rng stream(std::uint64_t seed, std::string_view name) {
        return Rng(seed ^ fnv1a64(name));
    }

    static std::uint64_t fnv1a64(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1): top 53 bits of the next output.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; generates pairs, caches the second.
    double next_normal();

    /// Uniform index in [0, n) via the Lemire multiply-shift reduction.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Fisher-Yates shuffle, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

} // namespace calsig

#endif
