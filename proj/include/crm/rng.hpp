#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace crm {

/// Counter-based pseudo random generator.
///
/// Every output is a pure function of (key, counter), so a stream can be
/// forked into named or indexed sub-streams without perturbing siblings. All
/// derived distributions (uniform, normal, shuffles) are implemented here
/// rather than through <random> distributions so results are identical across
/// standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  /// Independent sub-stream keyed by a name ("train", "split", ...).
  Rng derive(std::string_view name) const noexcept;
  /// Independent sub-stream keyed by an index (trial number, epoch, ...).
  Rng derive(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  Rng(std::uint64_t key, int /*raw*/) noexcept : key_(key) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace crm
