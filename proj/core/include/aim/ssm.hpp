#pragma once

#include "aim/tensor.hpp"

namespace aim {

// Diagonal selective state-space kernel.
//
// Continuous parameters, per sequence:
//   A     [C, N]  state matrix diagonal (negative entries for stability)
//   Bt    [L, N]  input projection per timestep (shared across channels)
//   Ct    [L, N]  output projection per timestep
//   delta [L, C]  step sizes, strictly positive
// with C = channels, N = state dim, L = time. Inputs x are [L, C].
template <typename T>
struct SsmParams {
  Tensor<T> A;
  Tensor<T> Bt;
  Tensor<T> Ct;
  Tensor<T> delta;
};

template <typename T>
struct Discretized {
  Tensor<T> abar;  // [L, C, N] = exp(delta*A)
  Tensor<T> bbar;  // [L, C, N] = (delta*A)^-1 (exp(delta*A)-1) * delta*Bt
};

template <typename T>
struct ScanResult {
  Tensor<T> y;   // [L, C], on the tape when inputs require grad
  Tensor<T> hT;  // [C, N], detached (decode-state carry only)
};

template <typename T>
struct StepResult {
  Tensor<T> y;  // [C]
  Tensor<T> h;  // [C, N]
};

// bbar rule: exact zero-order hold, or the common delta*B shortcut (kept
// behind a flag for A/B comparison; abar is exp(delta*A) either way).
enum class BbarMethod { kZoh, kEulerB };

// Zero-order hold. The factor (exp(z)-1)/z switches to its series
// 1 + z/2 + z^2/6 for |z| < 1e-6 to avoid cancellation.
template <typename T>
Discretized<T> zoh_discretize(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bt,
                              BbarMethod method = BbarMethod::kZoh);

// h_t = abar_t (.) h_{t-1} + bbar_t (.) x_t ;  y_tc = sum_n ct_tn h_tcn
template <typename T>
ScanResult<T> scan_sequential(const Discretized<T>& d, const Tensor<T>& ct, const Tensor<T>& x,
                              const Tensor<T>& h0);

// Same recurrence through a blocked two-sweep prefix scan over the monoid
// (a1,b1)*(a2,b2) = (a2*a1, a2*b1 + b2). The combination tree depends only on
// block_size, so results do not vary with worker count.
template <typename T>
ScanResult<T> scan_parallel(const Discretized<T>& d, const Tensor<T>& ct, const Tensor<T>& x,
                            const Tensor<T>& h0, int block_size = 64);

// Single timestep: abar_t/bbar_t [C,N], ct_t [N], x_t [C], h [C,N].
// Chaining steps t=1..L reproduces scan_sequential exactly (same op order).
template <typename T>
StepResult<T> scan_step(const Tensor<T>& abar_t, const Tensor<T>& bbar_t, const Tensor<T>& ct_t,
                        const Tensor<T>& x_t, const Tensor<T>& h);

// Convenience: discretize then scan.
template <typename T>
ScanResult<T> scan_sequential(const SsmParams<T>& p, const Tensor<T>& x, const Tensor<T>& h0);
template <typename T>
ScanResult<T> scan_parallel(const SsmParams<T>& p, const Tensor<T>& x, const Tensor<T>& h0,
                            int block_size = 64);

}  // namespace aim
