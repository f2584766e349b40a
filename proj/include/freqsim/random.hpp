#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace freqsim {

/// Stream-id namespaces. A path's stream is (seed, tag | index); results therefore do not
/// depend on how paths are scheduled across threads.
namespace stream_tag {
inline constexpr std::uint64_t kFrequency = 1ull << 40;
inline constexpr std::uint64_t kCbi = 2ull << 40;
inline constexpr std::uint64_t kCulling = 3ull << 40;
inline constexpr std::uint64_t kDual = 4ull << 40;
inline constexpr std::uint64_t kCoupled = 5ull << 40;
inline constexpr std::uint64_t kLargePopulation = 6ull << 40;
}  // namespace stream_tag

/// An exclusively owned random stream derived from (seed, stream id).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
    engine_.seed(seq);
  }

  /// Uniform on [0, 1).
  double uniform() { return unit_(engine_); }

  double normal() { return gauss_(engine_); }

  /// Exponential with the given rate; +inf when rate is zero.
  double exponential(double rate) {
    if (rate <= 0.0) return INFINITY;
    return -std::log1p(-uniform()) / rate;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace freqsim
