#pragma once

#include <cstdint>
#include <random>

namespace ctscore {

/// Role tags that separate the random streams a single run consumes.
enum class StreamRole : std::uint32_t {
  kHidden = 1,
  kObservations = 2,
  kDirect = 3,
  kBridge = 4,
  kCoupled = 5,
  kEstimation = 6,
  kTest = 99,
};

/// Address of a sub-stream below a root seed:
/// root -> (replication, role, level, particle).
struct StreamKey {
  std::uint64_t replication = 0;
  StreamRole role = StreamRole::kTest;
  std::uint32_t level = 0;
  std::uint64_t particle = 0;
};

/// A seeded engine plus the distributions drawn from it. Not thread safe;
/// give every concurrent consumer its own stream.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  RandomStream(std::uint64_t root_seed, const StreamKey& key);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Deterministic 64-bit seed for the given key.
std::uint64_t derive_seed(std::uint64_t root_seed, const StreamKey& key);

}  // namespace ctscore
