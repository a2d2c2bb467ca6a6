#include "aim/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aim {

void GuidanceConfig::validate() const {
  check(w >= 0.0 && std::isfinite(w), "guidance: w must be finite and >= 0");
  check(temperature > 0.0 && std::isfinite(temperature), "guidance: temperature must be > 0");
  check(top_k >= 0, "guidance: top_k must be >= 0");
  check(top_p >= 0.0 && top_p <= 1.0, "guidance: top_p must be in [0,1]");
  if (prob_space)
    check(w <= 1.0, "guidance: probability-space interpolation needs w in [0,1]");
}

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& uncond, const Tensor<T>& cond, double w, bool prob_space) {
  check(uncond.shape() == cond.shape(), "cfg_combine: shape mismatch");
  for (T v : uncond.data()) check(std::isfinite(static_cast<double>(v)), "cfg_combine: non-finite logits");
  for (T v : cond.data()) check(std::isfinite(static_cast<double>(v)), "cfg_combine: non-finite logits");
  NoGrad ng;
  if (!prob_space)
    return add(scale(uncond, static_cast<T>(1.0 - w)), scale(cond, static_cast<T>(w)));

  check(w >= 0.0 && w <= 1.0, "cfg_combine: probability-space interpolation needs w in [0,1]");
  // mix the softmax distributions, then go back to log space for sampling
  const int64_t V = uncond.numel();
  auto pu = softmax_last(reshape(uncond, {1, V}));
  auto pc = softmax_last(reshape(cond, {1, V}));
  auto out = Tensor<T>::zeros({V});
  for (int64_t i = 0; i < V; ++i) {
    double m = (1.0 - w) * static_cast<double>(pu.data()[i]) + w * static_cast<double>(pc.data()[i]);
    out.data()[i] = static_cast<T>(std::log(std::max(m, 1e-300)));
  }
  return out;
}

template <typename T>
int sample_token(const Tensor<T>& logits, const GuidanceConfig& g, Rng& rng) {
  g.validate();
  check(logits.rank() == 1, "sample_token: logits must be rank 1");
  const int64_t V = logits.numel();
  check(V >= 1, "sample_token: empty logits");
  for (T v : logits.data()) check(std::isfinite(static_cast<double>(v)), "sample_token: non-finite logits");

  if (g.argmax) {
    int best = 0;
    for (int64_t i = 1; i < V; ++i)
      if (logits.data()[i] > logits.data()[best]) best = static_cast<int>(i);
    return best;
  }

  std::vector<double> z(V);
  double mx = -1e300;
  for (int64_t i = 0; i < V; ++i) {
    z[i] = static_cast<double>(logits.data()[i]) / g.temperature;
    mx = std::max(mx, z[i]);
  }
  std::vector<double> p(V);
  double sum = 0.0;
  for (int64_t i = 0; i < V; ++i) {
    p[i] = std::exp(z[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;

  // sort indices by probability (descending), index ascending on ties, so the
  // kept set is deterministic
  std::vector<int> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });

  int64_t keep = V;
  if (g.top_k > 0) keep = std::min<int64_t>(keep, g.top_k);
  if (g.top_p > 0.0) {
    double cum = 0.0;
    int64_t need = 0;
    while (need < keep) {
      cum += p[order[need]];
      ++need;
      if (cum >= g.top_p) break;
    }
    keep = need;
  }
  check(keep >= 1, "sample_token: all tokens masked");

  std::vector<char> kept(V, 0);
  double total = 0.0;
  for (int64_t i = 0; i < keep; ++i) {
    kept[order[i]] = 1;
    total += p[order[i]];
  }
  check(total > 0.0, "sample_token: all tokens masked");

  const double u = rng.uniform() * total;
  double cum = 0.0;
  int last = -1;
  for (int64_t i = 0; i < V; ++i) {
    if (!kept[i]) continue;
    cum += p[i];
    last = static_cast<int>(i);
    if (u < cum) return last;
  }
  return last;  // numeric slack: u landed at the very top of the CDF
}

template <typename T>
DecodeSession<T> begin_session(const ModelWeights<T>& w, int class_id, Rng rng,
                               const GuidanceConfig& g) {
  g.validate();
  check(class_id >= 0 && class_id < w.cfg.n_classes, "begin_session: class id out of range");
  NoGrad ng;
  DecodeSession<T> s;
  s.class_id = class_id;
  s.rng = rng;
  if (g.w != 0.0) {
    s.mods_cond = regress_all(w, class_id);
    s.cond_state = init_decode_state<T>(w.cfg);
  }
  if (g.w != 1.0) {
    s.mods_null = regress_all(w, w.cfg.null_class());
    s.null_state = init_decode_state<T>(w.cfg);
  }
  return s;
}

template <typename T>
Tensor<T> session_logits(DecodeSession<T>& s, const ModelWeights<T>& w, const GuidanceConfig& g) {
  check(s.cursor < w.cfg.seq_len, "session: sequence already complete");
  NoGrad ng;
  const bool run_cond = g.w != 0.0;
  const bool run_null = g.w != 1.0;
  Tensor<T> lc, lu;
  if (run_cond) {
    int in = s.cursor == 0 ? s.class_id : s.last_token;
    lc = model_step(w, s.mods_cond, s.cond_state, in);
  }
  if (run_null) {
    int in = s.cursor == 0 ? w.cfg.null_class() : s.last_token;
    lu = model_step(w, s.mods_null, s.null_state, in);
  }
  ++s.cursor;
  if (!run_null) return lc;
  if (!run_cond) return lu;
  return cfg_combine(lu, lc, g.w, g.prob_space);
}

template <typename T>
int session_step(DecodeSession<T>& s, const ModelWeights<T>& w, const GuidanceConfig& g) {
  Tensor<T> guided = session_logits(s, w, g);
  int tok = sample_token(guided, g, s.rng);
  s.last_token = tok;
  return tok;
}

template <typename T>
std::vector<std::vector<uint16_t>> generate(const ModelWeights<T>& w, int class_id, int n_samples,
                                            const GuidanceConfig& g, uint64_t seed) {
  check(n_samples >= 1, "generate: n_samples must be >= 1");
  std::vector<std::vector<uint16_t>> out;
  out.reserve(n_samples);
  for (int n = 0; n < n_samples; ++n) {
    DecodeSession<T> s =
        begin_session(w, class_id, Rng(seed, mix64(0x5a3c, static_cast<uint64_t>(n))), g);
    std::vector<uint16_t> tokens;
    tokens.reserve(w.cfg.seq_len);
    for (int t = 0; t < w.cfg.seq_len; ++t)
      tokens.push_back(static_cast<uint16_t>(session_step(s, w, g)));
    out.push_back(std::move(tokens));
  }
  return out;
}

#define AIM_SAMPLER_INSTANTIATE(T)                                                              \
  template Tensor<T> cfg_combine<T>(const Tensor<T>&, const Tensor<T>&, double, bool);          \
  template int sample_token<T>(const Tensor<T>&, const GuidanceConfig&, Rng&);                  \
  template struct DecodeSession<T>;                                                             \
  template DecodeSession<T> begin_session<T>(const ModelWeights<T>&, int, Rng,                  \
                                             const GuidanceConfig&);                            \
  template Tensor<T> session_logits<T>(DecodeSession<T>&, const ModelWeights<T>&,               \
                                       const GuidanceConfig&);                                  \
  template int session_step<T>(DecodeSession<T>&, const ModelWeights<T>&, const GuidanceConfig&); \
  template std::vector<std::vector<uint16_t>> generate<T>(const ModelWeights<T>&, int, int,     \
                                                          const GuidanceConfig&, uint64_t);

AIM_SAMPLER_INSTANTIATE(float)
AIM_SAMPLER_INSTANTIATE(double)

}  // namespace aim
