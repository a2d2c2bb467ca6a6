#include "aim/mamba.hpp"

#include <cmath>

namespace aim {

void validate(const BlockConfig& cfg) {
  check(cfg.d_model >= 1, "BlockConfig: d_model must be >= 1");
  check(cfg.expand >= 1, "BlockConfig: expand must be >= 1");
  check(cfg.state_dim >= 1, "BlockConfig: state_dim must be >= 1");
  check(cfg.conv_kernel >= 2, "BlockConfig: conv_kernel must be >= 2");
  check(cfg.scan_block >= 1, "BlockConfig: scan_block must be >= 1");
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> BlockWeights<T>::params() {
  return {{"in_proj", &in_proj},   {"conv_w", &conv_w},   {"x_proj", &x_proj},
          {"dt_proj", &dt_proj},   {"dt_bias", &dt_bias}, {"A_log", &A_log},
          {"D", &D},               {"out_proj", &out_proj}};
}

template <typename T>
BlockWeights<T> init_block_weights(const BlockConfig& cfg, Rng& rng) {
  validate(cfg);
  const int64_t d = cfg.d_model, di = cfg.d_inner(), N = cfg.state_dim, k = cfg.conv_kernel;
  const int64_t R = cfg.dt_rank_eff();
  BlockWeights<T> w;
  w.in_proj = Tensor<T>::randn({d, 2 * di}, rng, T(1) / std::sqrt(T(d)), true);
  w.conv_w = Tensor<T>::randn({di, k}, rng, T(1) / std::sqrt(T(k)), true);
  w.x_proj = Tensor<T>::randn({di, R + 2 * N}, rng, T(1) / std::sqrt(T(di)), true);
  w.dt_proj = Tensor<T>::randn({R, di}, rng, T(1) / std::sqrt(T(R)), true);
  // bias chosen so softplus(bias) is log-uniform in [1e-3, 1e-1]
  std::vector<T> dtb(static_cast<size_t>(di));
  for (auto& v : dtb) {
    const double dt = std::exp(std::log(1e-3) + rng.uniform() * (std::log(1e-1) - std::log(1e-3)));
    v = static_cast<T>(std::log(std::expm1(dt)));
  }
  w.dt_bias = Tensor<T>::from({di}, std::move(dtb), true);
  std::vector<T> alog(static_cast<size_t>(di * N));
  for (int64_t c = 0; c < di; ++c) {
    for (int64_t n = 0; n < N; ++n) {
      alog[static_cast<size_t>(c * N + n)] = static_cast<T>(std::log(double(n + 1)));
    }
  }
  w.A_log = Tensor<T>::from({di, N}, std::move(alog), true);
  w.D = Tensor<T>::full({di}, T(1), true);
  w.out_proj = Tensor<T>::randn({di, d}, rng, T(1) / std::sqrt(T(di)), true);
  return w;
}

template <typename T>
BlockState<T> init_state(const BlockConfig& cfg) {
  validate(cfg);
  BlockState<T> s;
  s.conv_ring = Tensor<T>::zeros({cfg.conv_kernel - 1, cfg.d_inner()});
  s.h = Tensor<T>::zeros({cfg.d_inner(), cfg.state_dim});
  return s;
}

namespace {

// in_proj .. out_proj on a pre-modulated input u [L, d]; the scan runs either
// full form. Returns the inner output before the gamma gate/residual.
template <typename T>
Tensor<T> inner_forward(const Tensor<T>& u, const BlockWeights<T>& w, const BlockConfig& cfg) {
  const int64_t di = cfg.d_inner(), N = cfg.state_dim, R = cfg.dt_rank_eff();
  auto proj = matmul(u, w.in_proj);
  auto main_in = slice(proj, 1, 0, di);
  auto gate = slice(proj, 1, di, di);
  auto act = silu(causal_conv1d(main_in, w.conv_w));
  auto xp = matmul(act, w.x_proj);
  SsmParams<T> p;
  p.delta = softplus(add(matmul(slice(xp, 1, 0, R), w.dt_proj), w.dt_bias));
  p.A = neg(exp(w.A_log));
  p.Bt = slice(xp, 1, R, N);
  p.Ct = slice(xp, 1, R + N, N);
  auto h0 = Tensor<T>::zeros({di, N});
  auto scan = cfg.parallel_scan ? scan_parallel(p, act, h0, cfg.scan_block)
                                : scan_sequential(p, act, h0);
  auto gated = mul(add(scan.y, mul(act, w.D)), silu(gate));
  return matmul(gated, w.out_proj);
}

}  // namespace

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& w, const Modulation<T>& m,
                        const BlockConfig& cfg) {
  validate(cfg);
  check(x.rank() == 2 && x.dim(1) == cfg.d_model,
        "block_forward: x must be [time," + std::to_string(cfg.d_model) + "], got " +
            shape_str(x.shape()));
  BlockFn<T> inner = [&](const Tensor<T>& u) { return inner_forward(u, w, cfg); };
  return modulate(x, m, inner);
}

template <typename T>
Tensor<T> block_step(const Tensor<T>& x_t, BlockState<T>& state, const BlockWeights<T>& w,
                     const Modulation<T>& m, const BlockConfig& cfg) {
  validate(cfg);
  const int64_t d = cfg.d_model, di = cfg.d_inner(), N = cfg.state_dim, k = cfg.conv_kernel;
  const int64_t R = cfg.dt_rank_eff();
  check(x_t.numel() == d, "block_step: x_t must have " + std::to_string(d) + " entries");
  check(state.conv_ring.defined() && state.conv_ring.dim(0) == k - 1 &&
            state.conv_ring.dim(1) == di && state.h.dim(0) == di && state.h.dim(1) == N,
        "block_step: state not initialized for this config");
  NoGrad ng;
  auto x_row = reshape(x_t, {1, d});
  auto u = add(mul(layer_norm(x_row), m.alpha), m.beta);
  auto proj = matmul(u, w.in_proj);
  auto main_in = slice(proj, 1, 0, di);
  auto gate = slice(proj, 1, di, di);

  // conv over [ring rows..., current row], ascending tap order as in the
  // full-sequence kernel
  std::vector<T> conv_out(static_cast<size_t>(di));
  {
    const auto& ring = state.conv_ring.data();
    const auto& cur = main_in.data();
    const auto& wd = w.conv_w.data();
    for (int64_t c = 0; c < di; ++c) {
      T acc = T(0);
      for (int64_t kk = 0; kk < k; ++kk) {
        const T xv = kk < k - 1 ? ring[static_cast<size_t>(kk * di + c)]
                                : cur[static_cast<size_t>(c)];
        acc += wd[static_cast<size_t>(c * k + kk)] * xv;
      }
      conv_out[static_cast<size_t>(c)] = acc;
    }
  }
  auto act = silu(Tensor<T>::from({1, di}, std::move(conv_out)));
  auto xp = matmul(act, w.x_proj);
  auto delta = softplus(add(matmul(slice(xp, 1, 0, R), w.dt_proj), w.dt_bias));
  auto disc = zoh_discretize(delta, neg(exp(w.A_log)), slice(xp, 1, R, N));
  auto sr = scan_step(reshape(disc.abar, {di, N}), reshape(disc.bbar, {di, N}),
                      reshape(slice(xp, 1, R + N, N), {N}), reshape(act, {di}), state.h);
  state.h = sr.h;
  auto gated = mul(add(reshape(sr.y, {1, di}), mul(act, w.D)), silu(gate));
  auto out = matmul(gated, w.out_proj);
  auto y = add(x_row, mul(out, m.gamma));
  if (k > 1) {
    state.conv_ring = k > 2 ? concat<T>({slice(state.conv_ring, 0, 1, k - 2), main_in}, 0)
                            : main_in;
  }
  return reshape(y, {d});
}

#define AIM_INSTANTIATE_MAMBA(T)                                                             \
  template struct BlockWeights<T>;                                                           \
  template BlockWeights<T> init_block_weights(const BlockConfig&, Rng&);                     \
  template BlockState<T> init_state(const BlockConfig&);                                     \
  template Tensor<T> block_forward(const Tensor<T>&, const BlockWeights<T>&,                 \
                                   const Modulation<T>&, const BlockConfig&);                \
  template Tensor<T> block_step(const Tensor<T>&, BlockState<T>&, const BlockWeights<T>&,    \
                                const Modulation<T>&, const BlockConfig&);

AIM_INSTANTIATE_MAMBA(float)
AIM_INSTANTIATE_MAMBA(double)
#undef AIM_INSTANTIATE_MAMBA

}  // namespace aim
