#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lgchaos {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class StreamPurpose : std::uint64_t { brownian = 1, initial = 2, wiener = 3 };

/// Counter-based standard normal stream ("splitmix64 counter hash" + Box-Muller).
/// The k-th variate of stream (seed, purpose, id) is a pure function of those
/// four numbers, so particles can be simulated in any order or on any thread.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t id)
      : key_(splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(purpose) << 56)) ^ id)) {}

  double uniform(std::uint64_t counter) const {
    const std::uint64_t bits = splitmix64(key_ ^ splitmix64(counter));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;  // open interval (0, 1)
  }

  /// Variate with index k; 2j and 2j+1 share one Box-Muller pair.
  double normal(std::uint64_t k) const {
    const std::uint64_t pair = k >> 1;
    if (pair != cached_pair_) {
      const double r = std::sqrt(-2.0 * std::log(uniform(2 * pair)));
      const double theta = 2.0 * std::numbers::pi * uniform(2 * pair + 1);
      cached_[0] = r * std::cos(theta);
      cached_[1] = r * std::sin(theta);
      cached_pair_ = pair;
    }
    return cached_[k & 1];
  }

  /// Sequential access with pair caching; same values as normal(k) for k = 0, 1, ...
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      ++pos_;
      return spare_;
    }
    const std::uint64_t pair = pos_ >> 1;
    const double r = std::sqrt(-2.0 * std::log(uniform(2 * pair)));
    const double theta = 2.0 * std::numbers::pi * uniform(2 * pair + 1);
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    ++pos_;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  mutable std::uint64_t cached_pair_ = ~std::uint64_t{0};
  mutable double cached_[2] = {0.0, 0.0};
  std::uint64_t pos_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lgchaos
