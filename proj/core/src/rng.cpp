#include "aim/rng.hpp"

#include <cmath>

#include "aim/common.hpp"

namespace aim {

namespace {
inline uint64_t splitmix_step(uint64_t& s) {
  uint64_t z = (s += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (0x9E3779B97F4A7C15ull * (b + 0x100000001B3ull));
  uint64_t z = splitmix_step(s);
  return z ^ splitmix_step(s);
}

Rng::Rng(uint64_t seed, uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), state_(mix64(seed, stream_id)) {}

uint64_t Rng::next_u64() { return splitmix_step(state_); }

double Rng::uniform() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_ = r * std::sin(theta);
  have_cached_ = true;
  return r * std::cos(theta);
}

int64_t Rng::uniform_int(int64_t n) {
  check(n > 0, "Rng::uniform_int: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t threshold = (~un + 1) % un;  // 2^64 mod n
  for (;;) {
    const uint64_t r = next_u64();
    if (r >= threshold) return static_cast<int64_t>(r % un);
  }
}

Rng Rng::fork(uint64_t substream) const {
  return Rng(seed_, mix64(stream_id_, substream));
}

}  // namespace aim
