#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace aim {

// All recoverable failures surface as aim::Error; the CLI turns them into a
// single-line diagnostic and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Global worker cap for the few places that parallelize (dataset generation,
// independent training runs, wide scans). 1 means fully serial.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into fixed contiguous chunks whose
// boundaries do not depend on the worker count, and every fn(i) writes only
// its own outputs, so results are identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

std::string human_bytes(uint64_t bytes);

}  // namespace aim
