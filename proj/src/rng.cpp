#include "ctscore/rng.hpp"

#include <array>

namespace ctscore {

std::uint64_t derive_seed(std::uint64_t root_seed, const StreamKey& key) {
  const std::array<std::uint32_t, 8> words = {
      static_cast<std::uint32_t>(root_seed),
      static_cast<std::uint32_t>(root_seed >> 32),
      static_cast<std::uint32_t>(key.replication),
      static_cast<std::uint32_t>(key.replication >> 32),
      static_cast<std::uint32_t>(key.role),
      key.level,
      static_cast<std::uint32_t>(key.particle),
      static_cast<std::uint32_t>(key.particle >> 32),
  };
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

RandomStream::RandomStream(std::uint64_t root_seed, const StreamKey& key)
    : engine_(derive_seed(root_seed, key)) {}

}  // namespace ctscore
