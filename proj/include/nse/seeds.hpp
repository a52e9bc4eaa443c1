#pragma once

#include <cstdint>
#include <string_view>

namespace nse {

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Counter-mode seed split: the derived seed depends only on (master, label),
/// so adding new labels never perturbs existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return splitmix64(splitmix64(master) ^ fnv1a(label));
}

} // namespace nse
