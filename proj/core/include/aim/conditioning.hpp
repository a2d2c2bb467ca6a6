#pragma once

#include "aim/tensor.hpp"

namespace aim {

// Grouped adaptive layer-norm conditioning: layers are partitioned into G
// contiguous groups sharing a regression matrix, with per-layer biases.
// G=1 degenerates to a single shared matrix, G=n_layers to one per layer.
struct GroupSpec {
  int n_layers = 1;   // N
  int n_groups = 1;   // G, 1 <= G <= N
  int embed_dim = 1;  // d
};

void validate(const GroupSpec& spec);
int assign_group(int layer_idx, const GroupSpec& spec);  // floor(i*G/N)
int64_t cond_param_count(const GroupSpec& spec);         // G*d*3d + N*3d

template <typename T>
struct CondWeights {
  Tensor<T> W;  // [G, d, 3d]
  Tensor<T> b;  // [N, 3d]
};

// W = 0 and bias rows fixed to (alpha=1, beta=0, gamma=0): every block starts
// as an identity residual and the initial logits carry no class signal.
template <typename T>
CondWeights<T> init_cond_weights(const GroupSpec& spec);

template <typename T>
struct Modulation {
  Tensor<T> alpha, beta, gamma;  // each [d]
};

// [alpha, beta, gamma] = split3(Swish(c) * W_{group(i)} + b_i); computed once
// per forward pass, shared by all timesteps.
template <typename T>
Modulation<T> regress_modulation(const Tensor<T>& c, const CondWeights<T>& w, int layer_idx,
                                 const GroupSpec& spec);

template <typename T>
using BlockFn = std::function<Tensor<T>(const Tensor<T>&)>;

// x + gamma (.) F(alpha (.) norm(x) + beta) over x [time, d]; norm is
// layer-norm without affine. apply_norm=false exposes the bare affine form
// for arithmetic oracles.
template <typename T>
Tensor<T> modulate(const Tensor<T>& x, const Modulation<T>& m, const BlockFn<T>& F,
                   bool apply_norm = true);

}  // namespace aim
