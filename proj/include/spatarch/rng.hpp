#pragma once

#include <cmath>
#include <cstdint>

namespace spatarch {

// Counter-based generator (Philox4x32-10). A stream is keyed by
// (seed, cell, replication, stream id); draws depend only on the key and the
// draw index, so replications can run on any thread layout and still produce
// identical panels.
class CounterRng {
 public:
  enum Stream : std::uint32_t { kMu = 0, kAlpha = 1, kX = 2, kEps = 3 };

  CounterRng(std::uint64_t seed, std::uint32_t cell, std::uint32_t replication,
             std::uint32_t stream)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        ctr2_(replication),
        ctr3_(stream | (cell << 8)) {}

  double uniform() {
    if (have_ == 0) refill();
    const std::uint64_t hi = block_[--have_];
    const std::uint64_t lo = block_[--have_];
    const std::uint64_t x = (hi << 32) | lo;
    // (0,1) strictly: offset by half an ulp of the 53-bit grid.
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller; one uniform pair yields two normals, second one cached.
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }

 private:
  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(index_);
    std::uint32_t c1 = static_cast<std::uint32_t>(index_ >> 32);
    std::uint32_t c2 = ctr2_, c3 = ctr3_;
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    block_[0] = c0;
    block_[1] = c1;
    block_[2] = c2;
    block_[3] = c3;
    have_ = 4;
    ++index_;
  }

  std::uint32_t key0_, key1_, ctr2_, ctr3_;
  std::uint64_t index_ = 0;
  std::uint32_t block_[4] = {0, 0, 0, 0};
  int have_ = 0;
  bool have_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace spatarch
