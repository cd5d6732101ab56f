#pragma once

#include <cstdint>
#include <random>

namespace ensemblab {

/// Provenance of the random stream that produced a path.
/// Segmented (non-simulated) ensembles use master_seed = 0.
struct SeedTag {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_index = 0;

    friend bool operator==(const SeedTag&, const SeedTag&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Child seed for nested replication loops (e.g. grid point x replication).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
    return detail::splitmix64(detail::splitmix64(master ^ detail::splitmix64(a + 1)) ^
                              detail::splitmix64(b + 0x5851F42D4C957F2DULL));
}

/// Deterministic per-stream generator keyed by (master_seed, stream_index).
/// Distinct indices give statistically independent streams, so ensembles can
/// be generated in any order or in parallel and still reproduce bit-identically.
inline std::mt19937_64 make_stream(std::uint64_t master_seed, std::uint64_t stream_index) {
    const std::uint64_t a = detail::splitmix64(master_seed);
    const std::uint64_t b = detail::splitmix64(a ^ (stream_index + 0x9E3779B97F4A7C15ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

} // namespace ensemblab
