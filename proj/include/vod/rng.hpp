#ifndef VOD_RNG_HPP
#define VOD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

// Counter-based splittable randomness. Every draw is a pure function of
// (seed, counter), so independent sub-streams are derived by re-seeding
// rather than by sharing mutable state.

namespace vod::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic sub-seed for stream `tag` of stream `seed`.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag * kGolden + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive(derive(seed, a), b);
}

/// FNV-1a over a byte string; used to hash tokens into embedding rows.
inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  /// Uniform on (0, 1]: never zero, so priority keys p/u stay finite.
  double uniform_open_closed() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (platform-stable, unlike
  /// std::normal_distribution).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open_closed();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  Stream split(std::uint64_t tag) const { return Stream(derive(state_, tag)); }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Walker/Vose alias table: O(1) categorical draws with replacement.
/// Used by the with-replacement oracle estimators, not by priority sampling.
class CategoricalSampler {
 public:
  explicit CategoricalSampler(std::span<const double> probs) {
    const std::size_t n = probs.size();
    if (n == 0) throw std::invalid_argument("CategoricalSampler: empty distribution");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw std::invalid_argument("CategoricalSampler: negative probability");
      total += p;
    }
    if (total <= 0.0) throw std::invalid_argument("CategoricalSampler: zero total mass");
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = probs[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (std::size_t i : large) prob_[i] = 1.0;
    for (std::size_t i : small) prob_[i] = 1.0;
  }

  std::size_t draw(Stream& stream) const {
    const std::size_t i = static_cast<std::size_t>(stream.below(prob_.size()));
    return stream.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

}  // namespace vod::rng

#endif  // VOD_RNG_HPP
