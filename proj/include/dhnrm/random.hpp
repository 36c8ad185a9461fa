// Apache License, Version 2.0, refer to LICENSE.txt

// Counter-based random streams and the handful of variate generators the
// samplers need. Everything here is bit-reproducible across platforms: the
// engine is Philox4x32-10 and the continuous generators are written out
// rather than delegated to implementation-defined <random> distributions.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/random/poisson_distribution.hpp>

namespace dhnrm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

/// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo32(kM0, ctr[0], hi0, lo0);
    detail::mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// A seedable stream of 32-bit words. The state is (seed, stream, block,
/// position), so a stream can be saved as text and resumed exactly, and
/// independent substreams can be carved out by tag without coordination.
class Rng {
 public:
  using result_type = std::uint32_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent stream keyed by `tag`; does not advance this stream.
  Rng substream(std::uint64_t tag) const {
    return Rng(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(tag + 1)));
  }
  Rng substream(std::uint64_t tag1, std::uint64_t tag2) const {
    return substream(tag1).substream(tag2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << stream_ << ' ' << block_ << ' ' << pos_;
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    std::istringstream is(text);
    std::uint64_t seed, stream, block;
    int pos;
    if (!(is >> seed >> stream >> block >> pos) || pos < 0 || pos > 4)
      throw std::invalid_argument("malformed rng state: " + text);
    Rng r(seed, stream);
    if (pos < 4) {
      r.block_ = block - 1;
      r.refill();
      r.pos_ = pos;
    } else {
      r.block_ = block;
    }
    return r;
  }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.seed_ == b.seed_ && a.stream_ == b.stream_ &&
           a.block_ == b.block_ && a.pos_ == b.pos_;
  }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                              static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = philox4x32(ctr, key);
    ++block_;
    pos_ = 0;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;  // next block to generate
  int pos_ = 4;
  std::array<std::uint32_t, 4> buffer_{};
};

/// Uniform on the open interval (0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  for (;;) {
    const std::uint64_t hi = rng(), lo = rng();
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    if (bits != 0) return static_cast<double>(bits) * 0x1.0p-53;
  }
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double exponential(Rng& rng, double rate = 1.0) {
  return -std::log(uniform01(rng)) / rate;
}

/// Standard normal via the Marsaglia polar method (second variate dropped so
/// no state is carried between calls).
inline double normal(Rng& rng) {
  for (;;) {
    const double x = 2.0 * uniform01(rng) - 1.0;
    const double y = 2.0 * uniform01(rng) - 1.0;
    const double s = x * x + y * y;
    if (s > 0.0 && s < 1.0) return x * std::sqrt(-2.0 * std::log(s) / s);
  }
}

/// Gamma(shape, rate) by Marsaglia and Tsang. Shapes below one draw
/// Gamma(shape + 1) and scale by U^{1/shape}, in log space.
inline double gamma(Rng& rng, double shape, double rate = 1.0) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    const double g = gamma(rng, shape + 1.0, 1.0);
    return std::exp(std::log(g) + std::log(uniform01(rng)) / shape) / rate;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

inline long poisson(Rng& rng, double mean) {
  if (mean < 0.0 || !std::isfinite(mean))
    throw std::invalid_argument("poisson: mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  boost::random::poisson_distribution<long, double> dist(mean);
  return dist(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Index drawn proportionally to nonnegative weights.
inline std::size_t categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::domain_error("categorical: weights must have positive finite sum");
  double u = uniform01(rng) * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return last_positive;
}

/// Index drawn from unnormalized log weights.
inline std::size_t log_categorical(Rng& rng, std::span<const double> log_weights) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) hi = std::max(hi, lw);
  if (!std::isfinite(hi)) throw std::domain_error("log_categorical: no finite weight");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - hi);
  return categorical(rng, w);
}

}  // namespace dhnrm
