// SPDX-License-Identifier: MIT
//
// Seed derivation: every Monte Carlo loop draws path i from the stream
// derive_seed(seed, i), so results do not depend on scheduling.
#pragma once

#include <cstdint>
#include <random>

namespace chaosflow {

using Seed = std::uint64_t;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent child seed for `stream` under `parent`.
constexpr Seed derive_seed(Seed parent, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(parent) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Stream tags used when one path index needs several independent draws.
enum class Stream : std::uint64_t { Brownian = 1, Bridge = 2, Rejection = 3, HTransform = 4 };

constexpr Seed derive_seed(Seed parent, Stream tag) noexcept {
    return derive_seed(parent, static_cast<std::uint64_t>(tag) << 56);
}

class Rng {
public:
    explicit Rng(Seed seed) : engine_(splitmix64(seed)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace chaosflow
