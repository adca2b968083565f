#ifndef CSL_RNG_HPP
#define CSL_RNG_HPP

// Counter-derived per-trial random streams.
//
// Reproducibility contract: the stream for trial i is a pure function of
// (master_seed, i), so trials can run on any number of threads in any order
// and still produce bit-identical trajectories. Within a trial, one Gaussian
// is consumed per cell per step, in cell order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace csl {

// SplitMix64 step (Steele, Lea, Flood 2014). Used both as a seed mixer and
// to expand a single seed into generator state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream seed for one trial: hash of (master_seed, trial_index).
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                        std::uint64_t trial_index) {
  std::uint64_t s = master_seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (trial_index * 0xD2B74407B1CE6E93ULL + 0x8BB84B93962EACC9ULL);
  return splitmix64(s);
}

// xoshiro256++ (Blackman & Vigna), state expanded from one 64-bit seed.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0,1), never exactly 0 or 1.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }
  std::uint64_t state_[4];
};

// Gaussian stream via Box-Muller; exactly two uniforms per generated pair,
// so the draw sequence is a fixed function of the seed.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

  double next_standard_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = gen_.next_unit();
    const double u2 = gen_.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double next_normal(double sigma) { return sigma * next_standard_normal(); }

 private:
  Xoshiro256pp gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline GaussianStream trial_stream(std::uint64_t master_seed,
                                   std::uint64_t trial_index) {
  return GaussianStream(derive_stream_seed(master_seed, trial_index));
}

}  // namespace csl

#endif
