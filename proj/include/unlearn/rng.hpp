#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace unlearn {

// All randomness in the library flows from a single master seed through named
// substreams, so changing e.g. the shuffle order of one stage never perturbs
// the splits or initializations of another. A substream is identified by a
// name and an optional index (shadow number, epoch, ...).

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index = 0) {
    std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a(name));
    return detail::splitmix64(h ^ detail::splitmix64(index));
}

inline std::mt19937_64 substream_rng(std::uint64_t master, std::string_view name,
                                     std::uint64_t index = 0) {
    return std::mt19937_64(substream_seed(master, name, index));
}

}  // namespace unlearn
