// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams (Philox4x32-10). A stream is identified by a
// 64-bit key; draws advance a 128-bit counter, so (seed, draw index) fully
// determines every variate and replicas never share state.
#pragma once

#include <array>
#include <cstdint>

namespace fv {

/// Philox4x32 with 10 rounds, as in Random123.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter encrypt(Counter ctr, Key key) noexcept;
};

/// SplitMix64 finalizer; used to derive replica seeds from (master, index).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of replica `index` in an ensemble rooted at `master_seed`.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return mix64(mix64(master_seed) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t substream = 0) noexcept;

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_pos() noexcept { return 1.0 - uniform(); }
    /// Exp(rate) variate; rate must be > 0.
    double exponential(double rate) noexcept;
    /// Standard normal (Box-Muller, second variate cached).
    double normal() noexcept;
    /// Uniform integer in [0, n) without modulo bias; n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    Philox4x32::Key key_;
    Philox4x32::Counter ctr_;
    Philox4x32::Counter block_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fv
