#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qpole::rng {

using Engine = std::mt19937_64;

// SplitMix64 finalizer, used to decorrelate derived stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (run seed, label). Streams for the
// environment, policy sampling, and shot sampling are kept separate so that
// e.g. enabling shot noise never perturbs the environment's randomness.
inline std::uint64_t stream_seed(std::uint64_t run_seed, std::string_view label) {
    std::uint64_t h = splitmix64(run_seed);
    for (char c : label) {
        h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    }
    return h;
}

inline Engine make_stream(std::uint64_t run_seed, std::string_view label) {
    return Engine(stream_seed(run_seed, label));
}

}  // namespace qpole::rng
