// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/rng.hpp"

#include <cmath>
#include <numbers>

namespace fv {

namespace {
constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;
}  // namespace

Philox4x32::Counter Philox4x32::encrypt(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t substream) noexcept
    : seed_(seed),
      key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      ctr_{0, 0, static_cast<std::uint32_t>(substream),
           static_cast<std::uint32_t>(substream >> 32)} {}

void RngStream::refill() noexcept {
    block_ = Philox4x32::encrypt(ctr_, key_);
    if (++ctr_[0] == 0) ++ctr_[1];
    used_ = 0;
}

std::uint32_t RngStream::next_u32() noexcept {
    if (used_ == 4) refill();
    return block_[used_++];
}

std::uint64_t RngStream::next_u64() noexcept {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

double RngStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::exponential(double rate) noexcept {
    return -std::log(uniform_pos()) / rate;
}

double RngStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<unsigned __int128>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace fv
