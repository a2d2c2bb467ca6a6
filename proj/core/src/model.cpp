#include "aim/model.hpp"

#include <cmath>
#include <cstdio>

namespace aim {

const char* pe_kind_name(PeKind k) {
  switch (k) {
    case PeKind::kLearned: return "learned";
    case PeKind::kSinusoidal: return "sinusoidal";
    case PeKind::kNone: return "none";
  }
  return "?";
}

PeKind pe_kind_from(const std::string& name) {
  if (name == "learned") return PeKind::kLearned;
  if (name == "sinusoidal") return PeKind::kSinusoidal;
  if (name == "none") return PeKind::kNone;
  throw Error("unknown pe kind '" + name + "' (expected learned|sinusoidal|none)");
}

BlockConfig ModelConfig::block() const {
  BlockConfig b;
  b.d_model = embed_dim;
  b.expand = expand;
  b.state_dim = state_dim;
  b.conv_kernel = conv_kernel;
  b.dt_rank = dt_rank;
  b.parallel_scan = parallel_scan;
  b.scan_block = scan_block;
  return b;
}

GroupSpec ModelConfig::groups() const { return GroupSpec{n_layers, n_groups, embed_dim}; }

void ModelConfig::validate() const {
  check(n_layers >= 1, "model: n_layers must be >= 1");
  check(vocab_size >= 2, "model: vocab_size must be >= 2");
  check(n_classes >= 1, "model: n_classes must be >= 1");
  check(seq_len >= 1, "model: seq_len must be >= 1");
  aim::validate(block());
  aim::validate(groups());
}

ModelConfig aim_b_config() {
  ModelConfig c;
  c.n_layers = 24;
  c.embed_dim = 768;
  c.n_groups = 24;
  c.vocab_size = 16384;
  c.n_classes = 1000;
  c.seq_len = 256;
  return c;
}

ModelConfig aim_l_config() {
  ModelConfig c = aim_b_config();
  c.n_layers = 48;
  c.embed_dim = 1024;
  c.n_groups = 4;
  return c;
}

namespace {

template <typename T>
Tensor<T> sinusoidal_table(int rows, int d) {
  auto t = Tensor<T>::zeros({rows, d});
  auto& p = t.data();
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < d; ++k) {
      double freq = std::pow(10000.0, -2.0 * (k / 2) / static_cast<double>(d));
      double v = (k % 2 == 0) ? std::sin(r * freq) : std::cos(r * freq);
      p[static_cast<int64_t>(r) * d + k] = static_cast<T>(v);
    }
  }
  return t;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelWeights<T>::params() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  out.emplace_back("token_embed", &token_embed);
  out.emplace_back("class_embed", &class_embed);
  if (cfg.pe == PeKind::kLearned) out.emplace_back("pos_embed", &pos_embed);
  for (size_t i = 0; i < layers.size(); ++i) {
    for (auto& [n, t] : layers[i].params())
      out.emplace_back("layers." + std::to_string(i) + "." + n, t);
  }
  out.emplace_back("cond.W", &cond.W);
  out.emplace_back("cond.b", &cond.b);
  out.emplace_back("final_norm.weight", &norm_weight);
  if (!cfg.tie_head) out.emplace_back("head", &head);
  return out;
}

template <typename T>
ModelWeights<T> init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelWeights<T> w;
  w.cfg = cfg;
  int64_t V = cfg.vocab_size, d = cfg.embed_dim, K = cfg.n_classes, L = cfg.seq_len;

  Rng er = rng.fork(1);
  w.token_embed = Tensor<T>::randn({V, d}, er, T(0.02));
  w.token_embed.set_requires_grad(true);
  // zero so that, together with zero-init conditioning, logits start class-free
  w.class_embed = Tensor<T>::zeros({K + 1, d});
  w.class_embed.set_requires_grad(true);

  if (cfg.pe == PeKind::kLearned) {
    Rng pr = rng.fork(2);
    w.pos_embed = Tensor<T>::randn({L + 1, d}, pr, T(0.02));
    w.pos_embed.set_requires_grad(true);
  } else if (cfg.pe == PeKind::kSinusoidal) {
    w.pos_embed = sinusoidal_table<T>(static_cast<int>(L) + 1, static_cast<int>(d));
  } else {
    w.pos_embed = Tensor<T>::zeros({L + 1, d});
  }

  w.layers.reserve(cfg.n_layers);
  for (int i = 0; i < cfg.n_layers; ++i) {
    Rng lr = rng.fork(100 + i);
    w.layers.push_back(init_block_weights<T>(cfg.block(), lr));
  }
  w.cond = init_cond_weights<T>(cfg.groups());
  w.norm_weight = Tensor<T>::full({d}, T(1));
  w.norm_weight.set_requires_grad(true);
  if (!cfg.tie_head) {
    Rng hr = rng.fork(3);
    // small head init keeps the start loss at ~ln V (near-uniform logits)
    w.head = Tensor<T>::randn({d, V}, hr, T(0.02));
    w.head.set_requires_grad(true);
  }
  for (auto& [n, t] : w.params()) t->set_name(n);
  return w;
}

int apply_class_dropout(int class_id, Rng& rng, double p, int null_class) {
  check(p >= 0.0 && p <= 1.0, "class dropout probability must be in [0,1]");
  if (p > 0.0 && rng.uniform() < p) return null_class;
  return class_id;
}

template <typename T>
Tensor<T> class_vector(const ModelWeights<T>& w, int effective_class) {
  check(effective_class >= 0 && effective_class <= w.cfg.n_classes,
        "class id out of range (null class = n_classes)");
  return reshape(embedding(w.class_embed, {effective_class}), {w.cfg.embed_dim});
}

template <typename T>
Tensor<T> embed_inputs(const TokenSequence& seq, const ModelWeights<T>& w, int effective_class) {
  const ModelConfig& cfg = w.cfg;
  check(static_cast<int64_t>(seq.tokens.size()) == cfg.seq_len,
        "sequence length does not match config seq_len");
  for (int64_t q : seq.tokens)
    check(q >= 0 && q < cfg.vocab_size, "token id out of vocab range");

  Tensor<T> cls = embedding(w.class_embed, {effective_class});  // [1, d]
  Tensor<T> rows;
  if (cfg.seq_len > 1) {
    std::vector<int64_t> ids(seq.tokens.begin(), seq.tokens.end() - 1);
    rows = concat(std::vector<Tensor<T>>{cls, embedding(w.token_embed, ids)}, 0);  // [L, d]
  } else {
    rows = cls;
  }
  if (cfg.pe != PeKind::kNone)
    rows = add(rows, slice(w.pos_embed, 0, 0, cfg.seq_len));
  return rows;
}

template <typename T>
Tensor<T> head_logits(const ModelWeights<T>& w, const Tensor<T>& h) {
  Tensor<T> n = mul(rms_norm(h), w.norm_weight);
  if (w.cfg.tie_head) return matmul(n, transpose(w.token_embed));
  return matmul(n, w.head);
}

template <typename T>
std::vector<Modulation<T>> regress_all(const ModelWeights<T>& w, int effective_class) {
  Tensor<T> c = class_vector(w, effective_class);
  std::vector<Modulation<T>> mods;
  mods.reserve(w.cfg.n_layers);
  for (int i = 0; i < w.cfg.n_layers; ++i)
    mods.push_back(regress_modulation(c, w.cond, i, w.cfg.groups()));
  return mods;
}

template <typename T>
Tensor<T> model_forward(const TokenSequence& seq, const ModelWeights<T>& w, int effective_class) {
  auto mods = regress_all(w, effective_class);
  Tensor<T> h = embed_inputs(seq, w, effective_class);
  for (int i = 0; i < w.cfg.n_layers; ++i)
    h = block_forward(h, w.layers[i], mods[i], w.cfg.block());
  return head_logits(w, h);
}

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logits, const std::vector<int64_t>& targets) {
  return cross_entropy(logits, targets);
}

int64_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  int64_t d = cfg.embed_dim, V = cfg.vocab_size, K = cfg.n_classes, L = cfg.seq_len;
  BlockConfig b = cfg.block();
  int64_t di = b.d_inner(), R = b.dt_rank_eff(), N = b.state_dim, k = b.conv_kernel;
  int64_t block = d * 2 * di + di * k + di * (R + 2 * N) + R * di + di + di * N + di + di * d;
  int64_t total = V * d + (K + 1) * d;
  if (cfg.pe == PeKind::kLearned) total += (L + 1) * d;
  total += cfg.n_layers * block;
  total += cond_param_count(cfg.groups());
  total += d;                     // final norm gain
  if (!cfg.tie_head) total += d * V;
  return total;
}

template <typename T>
DecodeState<T> init_decode_state(const ModelConfig& cfg) {
  DecodeState<T> st;
  st.position = 0;
  st.layers.reserve(cfg.n_layers);
  for (int i = 0; i < cfg.n_layers; ++i) st.layers.push_back(init_state<T>(cfg.block()));
  return st;
}

template <typename T>
Tensor<T> model_step(const ModelWeights<T>& w, const std::vector<Modulation<T>>& mods,
                     DecodeState<T>& st, int token_or_class) {
  const ModelConfig& cfg = w.cfg;
  check(static_cast<int>(mods.size()) == cfg.n_layers, "modulation count != n_layers");
  check(st.position >= 0 && st.position < cfg.seq_len, "decode position out of range");
  NoGrad ng;

  Tensor<T> row;
  if (st.position == 0) {
    check(token_or_class >= 0 && token_or_class <= cfg.n_classes, "class id out of range");
    row = embedding(w.class_embed, {token_or_class});
  } else {
    check(token_or_class >= 0 && token_or_class < cfg.vocab_size, "token id out of vocab range");
    row = embedding(w.token_embed, {token_or_class});
  }
  if (cfg.pe != PeKind::kNone)
    row = add(row, slice(w.pos_embed, 0, st.position, 1));

  Tensor<T> x = reshape(row, {cfg.embed_dim});
  for (int i = 0; i < cfg.n_layers; ++i)
    x = block_step(x, st.layers[i], w.layers[i], mods[i], cfg.block());
  ++st.position;
  Tensor<T> logits = head_logits(w, reshape(x, {1, cfg.embed_dim}));
  return reshape(logits, {cfg.vocab_size});
}

#define AIM_MODEL_INSTANTIATE(T)                                                              \
  template struct ModelWeights<T>;                                                            \
  template ModelWeights<T> init_model<T>(const ModelConfig&, Rng&);                           \
  template Tensor<T> class_vector<T>(const ModelWeights<T>&, int);                            \
  template Tensor<T> embed_inputs<T>(const TokenSequence&, const ModelWeights<T>&, int);      \
  template Tensor<T> head_logits<T>(const ModelWeights<T>&, const Tensor<T>&);                \
  template std::vector<Modulation<T>> regress_all<T>(const ModelWeights<T>&, int);            \
  template Tensor<T> model_forward<T>(const TokenSequence&, const ModelWeights<T>&, int);     \
  template Tensor<T> nll_loss<T>(const Tensor<T>&, const std::vector<int64_t>&);              \
  template DecodeState<T> init_decode_state<T>(const ModelConfig&);                           \
  template Tensor<T> model_step<T>(const ModelWeights<T>&, const std::vector<Modulation<T>>&, \
                                   DecodeState<T>&, int);

AIM_MODEL_INSTANTIATE(float)
AIM_MODEL_INSTANTIATE(double)

}  // namespace aim
