#pragma once

#include <cstdint>
#include <string_view>

namespace explorex {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over the bytes, then finalized so low bits are usable for bucketing.
// Stable across platforms and processes; never change it, bucketing depends on it.
constexpr std::uint64_t hash64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) noexcept {
    return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

/// Seed for one decision: a pure function of (unit, target, decision counter).
std::uint64_t derive_seed(std::string_view unit_id, std::string_view target_id,
                          std::uint64_t decision_counter) noexcept;

}  // namespace explorex
