#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace collapse {

/// Philox4x32-10 block cipher. Stateless: every 128-bit output is a pure
/// function of (key, counter), which is what makes path/step-addressed
/// noise reproducible under any work partitioning.
namespace philox {

inline std::array<uint32_t, 4> block(uint64_t key, std::array<uint32_t, 4> ctr) {
  uint32_t k0 = static_cast<uint32_t>(key);
  uint32_t k1 = static_cast<uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = uint64_t{0xD2511F53u} * ctr[0];
    const uint64_t p1 = uint64_t{0xCD9E8D57u} * ctr[2];
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
    const uint32_t lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
    const uint32_t lo1 = static_cast<uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  return ctr;
}

}  // namespace philox

inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Key for an independent random stream. Forking by label or index yields
/// streams that never share (key, counter) pairs.
inline uint64_t stream_key(uint64_t master, std::string_view domain) {
  return mix64(master ^ fnv1a64(domain));
}

inline uint64_t fork_key(uint64_t key, uint64_t index) {
  return mix64(key ^ (0xA5A5A5A55A5A5A5Bull + index * 0x9E3779B97F4A7C15ull));
}

inline uint64_t fork_key(uint64_t key, std::string_view label) {
  return mix64(key ^ fnv1a64(label));
}

namespace detail {

// (0,1] from 53 high bits, never 0 so log() is safe.
inline double unit_double(uint32_t lo, uint32_t hi) {
  const uint64_t u = (uint64_t{hi} << 32) | lo;
  return static_cast<double>((u >> 11) + 1) * 0x1.0p-53;
}

// Box-Muller pair from one Philox block.
inline void gauss_pair(const std::array<uint32_t, 4>& b, double& z0, double& z1) {
  const double u1 = unit_double(b[0], b[1]);
  const double u2 = unit_double(b[2], b[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  z0 = r * std::cos(theta);
  z1 = r * std::sin(theta);
}

}  // namespace detail

/// Addressed Gaussian noise: the draw for (path, step, index) is fixed by the
/// key alone. Used by the SDE integrator so that tiling and thread count do not
/// change a single sample.
class PathNoise {
 public:
  explicit PathNoise(uint64_t key) : key_(key) {}

  uint64_t key() const { return key_; }

  /// n standard normals for one (path, step) cell.
  void fill(uint64_t path, uint32_t step, double* out, int n) const {
    const uint32_t plo = static_cast<uint32_t>(path);
    const uint32_t phi = static_cast<uint32_t>(path >> 32);
    for (int b = 0; 2 * b < n; ++b) {
      const auto blk = philox::block(key_, {plo, phi, step, static_cast<uint32_t>(b)});
      double z0, z1;
      detail::gauss_pair(blk, z0, z1);
      out[2 * b] = z0;
      if (2 * b + 1 < n) out[2 * b + 1] = z1;
    }
  }

 private:
  uint64_t key_;
};

/// Sequential stream for single-owner use (sampling, shuffles, feature draws).
class SeqRng {
 public:
  explicit SeqRng(uint64_t key) : key_(key) {}

  uint32_t next_u32() {
    if (have_ == 0) {
      buf_ = philox::block(key_, {static_cast<uint32_t>(n_), static_cast<uint32_t>(n_ >> 32),
                                  0xC0FFEEu, 0});
      ++n_;
      have_ = 4;
    }
    return buf_[4 - have_--];
  }

  uint64_t next_u64() {
    const uint64_t lo = next_u32();
    const uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  /// Uniform in (0,1].
  double uniform() {
    const uint64_t u = next_u64();
    return static_cast<double>((u >> 11) + 1) * 0x1.0p-53;
  }

  double gaussian() {
    if (has_gauss_) {
      has_gauss_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_gauss_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n) by 128-bit multiply-shift.
  uint64_t bounded(uint64_t n) {
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<uint64_t>(m >> 64);
  }

  /// k distinct indices from [0, n), partial Fisher-Yates order.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
    std::vector<int64_t> idx(n);
    std::iota(idx.begin(), idx.end(), int64_t{0});
    for (int64_t i = 0; i < k; ++i) {
      const int64_t j = i + static_cast<int64_t>(bounded(static_cast<uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  uint64_t key_;
  uint64_t n_ = 0;
  std::array<uint32_t, 4> buf_{};
  int have_ = 0;
  bool has_gauss_ = false;
  double spare_ = 0.0;
};

}  // namespace collapse
