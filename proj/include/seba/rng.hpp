#ifndef SEBA_RNG_HPP
#define SEBA_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace seba {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/**
 * Derive the seed of a named sub-stream.
 *
 * Every random decision in the library is keyed by (master seed, stream name, index),
 * so that, e.g., retraining ensemble member 3 never perturbs member 4.
 */
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
    std::uint64_t h = detail::splitmix64(master);
    h = detail::splitmix64(h ^ detail::fnv1a(stream));
    return detail::splitmix64(h ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

} // namespace seba

#endif
