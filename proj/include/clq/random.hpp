#pragma once

// Counter-based randomness: every draw is a pure function of
// (seed, stream, period, slot), so streams never interact and any single
// draw can be reproduced without replaying the ones before it.

#include <cstdint>

namespace clq {

enum class Stream : std::uint64_t {
  arrival = 1,
  service = 2,
  transition = 3,
  policy = 4,
  // Services for the independent-Bernoulli variant of the single-queue engine.
  service_independent = 5,
};

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class RandomSource {
 public:
  explicit constexpr RandomSource(std::uint64_t seed) : seed_(seed) {}

  constexpr std::uint64_t seed() const { return seed_; }

  constexpr std::uint64_t bits(Stream stream, std::uint64_t period, std::uint64_t slot) const {
    std::uint64_t h = detail::mix64(seed_);
    h = detail::mix64(h ^ (static_cast<std::uint64_t>(stream) * 0xd6e8feb86659fd93ULL));
    h = detail::mix64(h ^ period);
    return detail::mix64(h ^ (slot * 0xa0761d6478bd642fULL + 0x632be59bd9b4e019ULL));
  }

  /// Uniform on the open interval (0, 1).
  constexpr double uniform(Stream stream, std::uint64_t period, std::uint64_t slot = 0) const {
    return (static_cast<double>(bits(stream, period, slot) >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace clq
