#include "crm/rng.hpp"

#include <cmath>
#include <numbers>

namespace crm {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed + kGolden)) {}

Rng Rng::derive(std::string_view name) const noexcept {
  return Rng(mix64(key_ ^ mix64(fnv1a(name))), 0);
}

Rng Rng::derive(std::uint64_t index) const noexcept {
  return Rng(mix64(key_ + mix64(index ^ 0xA5A5A5A55A5A5A5AULL) * kGolden), 0);
}

std::uint64_t Rng::next_u64() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  // Rejection on the top of the range removes modulo bias.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t r = next_u64();
  while (r >= limit) r = next_u64();
  return r % bound;
}

double Rng::normal() noexcept {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

}  // namespace crm
