#pragma once

// Counter-based random streams (Philox4x32-10).
//
// A stream is identified by (seed, stream id): the seed is the Philox key and
// the stream id fills the upper 64 bits of the 128-bit counter, the lower 64
// bits count blocks. Trajectory i of a batch uses stream id i, so results do
// not depend on which worker ran which trajectory. Nested streams (e.g. the
// renewal clock of a trajectory) are derived with `substream`, which mixes
// the parent id and a tag through SplitMix64.

#include <array>
#include <cstdint>

namespace driftlab {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via the Box–Muller transform; the second variate of
  /// each pair is cached.
  double normal();
  bool bernoulli(double p);
  /// Geometric on {1, 2, ...} with success probability p, by inversion.
  std::int64_t geometric(double p);
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  RandomStream substream(std::uint64_t tag) const;

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace driftlab
