#pragma once

#include <array>
#include <cstdint>

namespace htd {

// xoshiro256** seeded through splitmix64 from a (seed, stream-id) pair.
// Value type: copying a stream copies its position.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

  // Independent child stream; does not advance this one.
  RngStream derive(std::uint64_t stream) const;
  RngStream derive(std::uint64_t a, std::uint64_t b) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  // Number of 64-bit words drawn so far.
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Mixes several words into one; used to derive per-(step, index) streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace htd
