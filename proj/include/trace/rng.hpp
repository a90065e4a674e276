#pragma once

#include <cstdint>
#include <random>

namespace trace {

// splitmix64 finalizer; used to derive independent engine seeds from
// (run seed, stream id, index) so parallel and serial execution agree.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d49b533e958749ULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index = 0) {
    std::uint64_t s = mix64(seed ^ mix64(stream ^ mix64(index)));
    return std::mt19937_64(s);
}

inline double standard_normal(std::mt19937_64& eng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(eng);
}

inline double uniform(std::mt19937_64& eng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(eng);
}

// Fixed stream ids so every subsystem draws from its own lane.
namespace stream {
inline constexpr std::uint64_t sde_path = 0x5de0;
inline constexpr std::uint64_t bridge_path = 0xb41d;
inline constexpr std::uint64_t time_sampler = 0x7153;
inline constexpr std::uint64_t time_prime_sampler = 0x7154;
inline constexpr std::uint64_t view = 0x41e3;
inline constexpr std::uint64_t distill_noise = 0xd157;
inline constexpr std::uint64_t nn_init = 0x1217;
inline constexpr std::uint64_t nn_batch = 0x1218;
inline constexpr std::uint64_t metric_proj = 0x3e71;
inline constexpr std::uint64_t gmm_sample = 0x63a1;
}  // namespace stream

enum class Exec { serial, parallel };

}  // namespace trace
