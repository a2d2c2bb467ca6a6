#pragma once

#include <cstdint>

namespace aim {

// Counter-based generator (splitmix64 core). A stream is fully determined by
// (seed, stream_id), so independent consumers derive their own stream ids and
// never share mutable state.
uint64_t mix64(uint64_t a, uint64_t b);

class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(uint64_t seed, uint64_t stream_id);

  uint64_t next_u64();
  double uniform();              // [0, 1)
  double normal();               // standard normal (Box-Muller, cached pair)
  int64_t uniform_int(int64_t n);  // [0, n), n > 0

  // New independent stream keyed off this one's identity.
  Rng fork(uint64_t substream) const;

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_id_; }

 private:
  uint64_t seed_ = 0;
  uint64_t stream_id_ = 0;
  uint64_t state_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace aim
