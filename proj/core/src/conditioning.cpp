#include "aim/conditioning.hpp"

namespace aim {

void validate(const GroupSpec& spec) {
  check(spec.n_layers >= 1, "GroupSpec: n_layers must be >= 1");
  check(spec.n_groups >= 1 && spec.n_groups <= spec.n_layers,
        "GroupSpec: n_groups must lie in [1, n_layers], got " + std::to_string(spec.n_groups) +
            " for " + std::to_string(spec.n_layers) + " layers");
  check(spec.embed_dim >= 1, "GroupSpec: embed_dim must be >= 1");
}

int assign_group(int layer_idx, const GroupSpec& spec) {
  validate(spec);
  check(layer_idx >= 0 && layer_idx < spec.n_layers,
        "assign_group: layer index " + std::to_string(layer_idx) + " out of range");
  return static_cast<int>((static_cast<int64_t>(layer_idx) * spec.n_groups) / spec.n_layers);
}

int64_t cond_param_count(const GroupSpec& spec) {
  validate(spec);
  const int64_t d = spec.embed_dim;
  return static_cast<int64_t>(spec.n_groups) * d * 3 * d +
         static_cast<int64_t>(spec.n_layers) * 3 * d;
}

template <typename T>
CondWeights<T> init_cond_weights(const GroupSpec& spec) {
  validate(spec);
  const int64_t d = spec.embed_dim;
  CondWeights<T> w;
  w.W = Tensor<T>::zeros({spec.n_groups, d, 3 * d}, true).set_name("cond.W");
  std::vector<T> bias(static_cast<size_t>(spec.n_layers * 3 * d), T(0));
  for (int64_t i = 0; i < spec.n_layers; ++i) {
    for (int64_t j = 0; j < d; ++j) bias[static_cast<size_t>(i * 3 * d + j)] = T(1);  // alpha=1
  }
  w.b = Tensor<T>::from({spec.n_layers, 3 * d}, std::move(bias), true).set_name("cond.b");
  return w;
}

template <typename T>
Modulation<T> regress_modulation(const Tensor<T>& c, const CondWeights<T>& w, int layer_idx,
                                 const GroupSpec& spec) {
  const int64_t d = spec.embed_dim;
  check(c.numel() == d, "regress_modulation: class embedding must have " + std::to_string(d) +
                            " entries, got " + shape_str(c.shape()));
  check(w.W.rank() == 3 && w.W.dim(0) == spec.n_groups && w.W.dim(1) == d && w.W.dim(2) == 3 * d,
        "regress_modulation: W must be [G,d,3d], got " + shape_str(w.W.shape()));
  check(w.b.rank() == 2 && w.b.dim(0) == spec.n_layers && w.b.dim(1) == 3 * d,
        "regress_modulation: b must be [N,3d], got " + shape_str(w.b.shape()));
  const int g = assign_group(layer_idx, spec);
  auto Wg = reshape(slice(w.W, 0, g, 1), {d, 3 * d});
  auto bi = reshape(slice(w.b, 0, layer_idx, 1), {3 * d});
  auto row = add(matmul(reshape(swish(c), {1, d}), Wg), bi);  // [1, 3d]
  Modulation<T> m;
  m.alpha = reshape(slice(row, 1, 0, d), {d});
  m.beta = reshape(slice(row, 1, d, d), {d});
  m.gamma = reshape(slice(row, 1, 2 * d, d), {d});
  return m;
}

template <typename T>
Tensor<T> modulate(const Tensor<T>& x, const Modulation<T>& m, const BlockFn<T>& F,
                   bool apply_norm) {
  auto h = apply_norm ? layer_norm(x) : x;
  auto inner = add(mul(h, m.alpha), m.beta);
  return add(x, mul(F(inner), m.gamma));
}

#define AIM_INSTANTIATE_COND(T)                                                              \
  template CondWeights<T> init_cond_weights(const GroupSpec&);                               \
  template Modulation<T> regress_modulation(const Tensor<T>&, const CondWeights<T>&, int,    \
                                            const GroupSpec&);                               \
  template Tensor<T> modulate(const Tensor<T>&, const Modulation<T>&, const BlockFn<T>&, bool);

AIM_INSTANTIATE_COND(float)
AIM_INSTANTIATE_COND(double)
#undef AIM_INSTANTIATE_COND

}  // namespace aim
