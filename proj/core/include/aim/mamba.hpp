#pragma once

#include <utility>

#include "aim/conditioning.hpp"
#include "aim/rng.hpp"
#include "aim/ssm.hpp"

namespace aim {

struct BlockConfig {
  int d_model = 0;
  int expand = 2;      // d_inner = expand * d_model
  int state_dim = 16;  // N
  int conv_kernel = 4;
  int dt_rank = 0;  // 0 = ceil(d_model/16)
  bool parallel_scan = false;
  int scan_block = 64;

  int d_inner() const { return expand * d_model; }
  int dt_rank_eff() const { return dt_rank > 0 ? dt_rank : (d_model + 15) / 16; }
};

void validate(const BlockConfig& cfg);

template <typename T>
struct BlockWeights {
  Tensor<T> in_proj;   // [d, 2*di]
  Tensor<T> conv_w;    // [di, k]
  Tensor<T> x_proj;    // [di, dt_rank + 2*N]
  Tensor<T> dt_proj;   // [dt_rank, di]
  Tensor<T> dt_bias;   // [di]
  Tensor<T> A_log;     // [di, N]; A = -exp(A_log) < 0
  Tensor<T> D;         // [di]
  Tensor<T> out_proj;  // [di, d]

  std::vector<std::pair<std::string, Tensor<T>*>> params();
};

template <typename T>
BlockWeights<T> init_block_weights(const BlockConfig& cfg, Rng& rng);

// Decode cache: the last k-1 pre-conv activations (time-major, oldest row
// first) plus the scan state.
template <typename T>
struct BlockState {
  Tensor<T> conv_ring;  // [k-1, di]
  Tensor<T> h;          // [di, N]
};

template <typename T>
BlockState<T> init_state(const BlockConfig& cfg);

// Whole block with modulation wrapped around it:
//   y = x + gamma (.) Inner(alpha (.) LN(x) + beta)
// Inner: in_proj -> split(main, gate); main -> causal conv -> SiLU -> x_proj
// -> (dt_raw, B, C); delta = softplus(dt_proj(dt_raw) + dt_bias); selective
// scan; + D (.) scan-input; (.) SiLU(gate); out_proj.
template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& w, const Modulation<T>& m,
                        const BlockConfig& cfg);

// Single decode step (never taped). Chaining steps t=1..L reproduces
// block_forward exactly: every sub-op runs the same per-row arithmetic.
template <typename T>
Tensor<T> block_step(const Tensor<T>& x_t, BlockState<T>& state, const BlockWeights<T>& w,
                     const Modulation<T>& m, const BlockConfig& cfg);

}  // namespace aim
