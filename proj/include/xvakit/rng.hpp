#pragma once
#include <array>
#include <cmath>
#include <cstdint>

#include "xvakit/mathfn.hpp"

namespace xvakit {

/// Philox4x32-10 keyed counter permutation.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
        k[0] += kWeyl0;
        k[1] += kWeyl1;
    }
    return c;
}

/// Counter-based generator: every draw is a pure function of
/// (seed, path, stream, index), so paths are reproducible independently of
/// worker count and execution order.
class Philox {
  public:
    explicit Philox(std::uint64_t seed) {
        const std::uint64_t k = splitmix64(seed);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    std::array<std::uint32_t, 4> block(std::uint64_t path, std::uint32_t stream, std::uint32_t index) const {
        return philox4x32({index, stream, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)},
                          key_);
    }

    /// Uniform in the open interval (0,1): 53 significant bits, offset so 0 is unreachable.
    double uniform(std::uint64_t path, std::uint32_t stream, std::uint32_t index) const {
        const auto b = block(path, stream, index);
        const std::uint64_t w = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
        return static_cast<double>(w >> 11) * 0x1p-53 + 0x1p-54;
    }

    double normal(std::uint64_t path, std::uint32_t stream, std::uint32_t index) const {
        return norm_inv(uniform(path, stream, index));
    }

    double exponential(std::uint64_t path, std::uint32_t stream, std::uint32_t index) const {
        return -std::log(uniform(path, stream, index));
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

  private:
    std::array<std::uint32_t, 2> key_;
};

/// Draw-index layout shared by all simulation code.
struct DrawStreams {
    static constexpr std::uint32_t kNormals = 0;   // index = step * n_assets + asset
    static constexpr std::uint32_t kDefaults = 1;  // index 0: trader, 1: counterparty, 2: external
};

}  // namespace xvakit
