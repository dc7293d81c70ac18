#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace varscale {

// Seeded random stream. Distinct (seed, stream) pairs give independent,
// reproducible sequences; the engine position can be saved and restored.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::string save_state() const;
  void restore_state(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

// Well-known stream identifiers used by the training harness.
namespace streams {
inline constexpr std::uint64_t kDomain = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kEpisodes = 3;
inline constexpr std::uint64_t kScaling = 4;
inline constexpr std::uint64_t kValidation = 5;
inline constexpr std::uint64_t kTest = 6;
}  // namespace streams

}  // namespace varscale
