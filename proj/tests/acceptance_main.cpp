// Standalone acceptance harness: one pass/fail line per check, nonzero exit on
// any failure. Budgeted for a few minutes on a laptop CPU; run via ctest or
// directly from the build tree.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aim/bench.hpp"
#include "aim/mamba.hpp"

using namespace aim;

namespace {

std::string strf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

// Trained artifacts produced by the train-smoke check and reused by the
// guidance and serialization checks.
struct Artifacts {
  Dataset smoke;
  ModelConfig cfg;
  TrainConfig budget;
  std::optional<ModelWeights<float>> model;
  std::optional<OptimState> optim;
};
Artifacts art;

// --- 01: sequential vs parallel vs chained-step scan ------------------------

template <typename T>
double scan_worst(int instances, uint64_t seed) {
  NoGrad ng;
  double worst = 0;
  for (int i = 0; i < instances; ++i) {
    Rng rng(seed, uint64_t(i));
    const int64_t L = 1 + rng.uniform_int(512);
    const int64_t C = 1 + rng.uniform_int(8);
    const int64_t N = 1 + rng.uniform_int(16);
    const int block = 1 + int(rng.uniform_int(96));
    SsmParams<T> p;
    p.delta = Tensor<T>::rand_uniform({L, C}, rng, T(0.05), T(1.0));
    p.A = Tensor<T>::rand_uniform({C, N}, rng, T(-2.0), T(-0.1));
    p.Bt = Tensor<T>::randn({L, N}, rng);
    p.Ct = Tensor<T>::randn({L, N}, rng);
    auto x = Tensor<T>::randn({L, C}, rng);
    auto h0 = Tensor<T>::randn({C, N}, rng, T(0.3));
    auto d = zoh_discretize(p.delta, p.A, p.Bt);

    auto rs = scan_sequential(d, p.Ct, x, h0);
    auto rp = scan_parallel(d, p.Ct, x, h0, block);
    Tensor<T> h = h0;
    std::vector<T> stepped;
    stepped.reserve(size_t(L * C));
    for (int64_t t = 0; t < L; ++t) {
      auto ab = reshape(slice(d.abar, 0, t, 1), {C, N});
      auto bb = reshape(slice(d.bbar, 0, t, 1), {C, N});
      auto ct = reshape(slice(p.Ct, 0, t, 1), {N});
      auto xt = reshape(slice(x, 0, t, 1), {C});
      auto st = scan_step(ab, bb, ct, xt, h);
      h = st.h;
      stepped.insert(stepped.end(), st.y.data().begin(), st.y.data().end());
    }

    auto note = [&](const T* got, const T* ref, int64_t n) {
      for (int64_t k = 0; k < n; ++k) {
        const double r = double(ref[k]);
        const double e = std::abs(double(got[k]) - r) / std::max(1.0, std::abs(r));
        worst = std::max(worst, e);
      }
    };
    note(rp.y.data().data(), rs.y.data().data(), L * C);
    note(stepped.data(), rs.y.data().data(), L * C);
    note(rp.hT.data().data(), rs.hT.data().data(), C * N);
    note(h.data().data(), rs.hT.data().data(), C * N);
  }
  return worst;
}

std::string c01_scan_equivalence() {
  const int n = 1000;
  const double w64 = scan_worst<double>(n, 2024);
  const double w32 = scan_worst<float>(n, 2025);
  require(w64 < 1e-10, strf("f64 disagreement %.3e >= 1e-10", w64));
  require(w32 < 1e-5, strf("f32 disagreement %.3e >= 1e-5", w32));
  return strf("%d random instances (L<=512, C<=8, N<=16): f64 max err %.1e < 1e-10, f32 %.1e < 1e-5",
              n, w64, w32);
}

// --- 02: zero-order hold -----------------------------------------------------

std::string c02_zoh() {
  NoGrad ng;
  auto one = [](double v) { return TensorD::from({1, 1}, {v}); };
  auto d = zoh_discretize(one(std::log(2.0)), one(-1.0), one(1.0));
  const double ea = std::abs(d.abar.data()[0] - 0.5);
  const double eb = std::abs(d.bbar.data()[0] - 0.5);
  require(ea <= 1e-12 && eb <= 1e-12,
          strf("delta=ln2, A=-1, B=1: abar err %.2e, bbar err %.2e (tol 1e-12)", ea, eb));

  // series polynomial vs exact (exp(z)-1)/z at the branch-switch magnitude
  double es = 0;
  for (double z : {1e-5, -1e-5}) {
    const double series = 1.0 + z / 2.0 + z * z / 6.0;
    const double exact = std::expm1(z) / z;
    es = std::max(es, std::abs(series - exact) / std::abs(exact));
  }
  require(es <= 1e-9, strf("series vs exact factor at |z|=1e-5: rel err %.2e > 1e-9", es));

  // implementation against an expm1 oracle on both sides of the switch
  double ei = 0;
  for (double delta : {1e-5, 1e-7}) {
    auto dd = zoh_discretize(one(delta), one(-1.0), one(1.0));
    const double z = -delta;
    const double abar_ref = std::exp(z);
    const double bbar_ref = std::expm1(z) / z * delta;
    ei = std::max(ei, std::abs(dd.abar.data()[0] - abar_ref) / std::abs(abar_ref));
    ei = std::max(ei, std::abs(dd.bbar.data()[0] - bbar_ref) / std::abs(bbar_ref));
  }
  require(ei <= 1e-9, strf("impl vs expm1 oracle across the series switch: rel err %.2e > 1e-9", ei));
  return strf("ln2 instance err %.1e/%.1e (tol 1e-12); series-exact rel %.1e, both branches vs oracle %.1e (tol 1e-9)",
              ea, eb, es, ei);
}

// --- 03: central-difference gradients ---------------------------------------

struct GradScore {
  double worst = 0;
  int checks = 0;
  std::string where = "-";
  void note(double e, const std::string& label) {
    ++checks;
    if (e > worst) {
      worst = e;
      where = label;
    }
  }
};

void grad_primitives(GradScore& gs) {
  Rng rng(404, 0);
  auto x = TensorD::randn({3, 4}, rng);
  auto W = TensorD::randn({4, 5}, rng, 0.5);
  auto cw = TensorD::randn({4, 3}, rng, 0.5);
  auto tbl = TensorD::randn({6, 4}, rng);
  auto p35 = TensorD::randn({3, 5}, rng);
  auto p34 = TensorD::randn({3, 4}, rng);
  auto p82 = TensorD::randn({8, 2}, rng);
  const std::vector<int64_t> ids = {2, 0, 5};
  const std::vector<int64_t> tg = {1, 4, 0};

  // norms, activations, matmul, softmax, cross-entropy, scalar reductions
  auto f1 = [&](const TensorD& v, const TensorD& ww) {
    auto logits = matmul(swish(layer_norm(v)), ww);
    auto probed = sum(mul(softmax_last(logits), p35));
    auto extra = mean(exp(scale(rms_norm(v), 0.3)));
    return add(add(cross_entropy(logits, tg), extra), probed);
  };
  gs.note(gradient_check([&](const TensorD& v) { return f1(v, W); }, x, 1e-5), "primitives f1/x");
  gs.note(gradient_check([&](const TensorD& v) { return f1(x, v); }, W, 1e-5), "primitives f1/W");

  // causal conv, silu, softplus, log, sub, neg
  auto f2 = [&](const TensorD& v, const TensorD& cv) {
    auto conv = silu(causal_conv1d(v, cv));
    return sum(mul(log(softplus(sub(conv, neg(v)))), p34));
  };
  gs.note(gradient_check([&](const TensorD& v) { return f2(v, cw); }, x, 1e-5), "primitives f2/x");
  gs.note(gradient_check([&](const TensorD& v) { return f2(x, v); }, cw, 1e-5), "primitives f2/conv_w");

  // embedding, concat, slice, reshape, transpose
  auto f3 = [&](const TensorD& t) {
    auto rows = concat(std::vector<TensorD>{embedding(t, ids), x}, 0);
    auto tr = transpose(reshape(slice(rows, 0, 1, 4), {2, 8}));
    return sum(mul(tr, p82));
  };
  gs.note(gradient_check(f3, tbl, 1e-5), "primitives f3/table");
}

void grad_scan(GradScore& gs) {
  for (int which = 0; which < 5; ++which) {
    for (bool par : {false, true}) {
      Rng rng(900 + uint64_t(which) + (par ? 50 : 0), 0);
      SsmParams<double> p;
      p.delta = TensorD::rand_uniform({9, 2}, rng, 0.05, 1.0);
      p.A = TensorD::rand_uniform({2, 3}, rng, -2.0, -0.1);
      p.Bt = TensorD::randn({9, 3}, rng);
      p.Ct = TensorD::randn({9, 3}, rng);
      auto x = TensorD::randn({9, 2}, rng);
      auto h0 = TensorD::randn({2, 3}, rng, 0.3);
      auto d = zoh_discretize(p.delta, p.A, p.Bt);
      std::vector<TensorD> ins = {d.abar, d.bbar, p.Ct, x, h0};
      auto probe = TensorD::randn({9, 2}, rng);
      auto f = [&, which, par](const TensorD& t) {
        std::vector<TensorD> v = ins;
        v[size_t(which)] = t;
        Discretized<double> dd{v[0], v[1]};
        auto r = par ? scan_parallel(dd, v[2], v[3], v[4], 4)
                     : scan_sequential(dd, v[2], v[3], v[4]);
        return sum(mul(r.y, probe));
      };
      gs.note(gradient_check(f, ins[size_t(which)], 1e-5),
              strf("scan-%s input %d", par ? "parallel" : "sequential", which));
    }
  }
  for (double dscale : {1.0, 1e-3}) {
    Rng rng(501, uint64_t(dscale * 1000));
    auto delta = TensorD::rand_uniform({4, 3}, rng, 0.4 * dscale, 1.0 * dscale);
    auto A = TensorD::rand_uniform({3, 5}, rng, -1.5, -1e-4);
    auto Bt = TensorD::randn({4, 5}, rng);
    auto pa = TensorD::randn({4, 3, 5}, rng);
    auto pb = TensorD::randn({4, 3, 5}, rng);
    auto with = [&](int which, const TensorD& t) {
      auto d = zoh_discretize(which == 0 ? t : delta, which == 1 ? t : A, which == 2 ? t : Bt);
      return add(sum(mul(d.abar, pa)), sum(mul(d.bbar, pb)));
    };
    const char* tag = dscale == 1.0 ? "zoh" : "zoh-series";
    gs.note(gradient_check([&](const TensorD& t) { return with(0, t); }, delta, 1e-6),
            strf("%s/delta", tag));
    gs.note(gradient_check([&](const TensorD& t) { return with(1, t); }, A, 1e-6),
            strf("%s/A", tag));
    gs.note(gradient_check([&](const TensorD& t) { return with(2, t); }, Bt, 1e-6),
            strf("%s/Bt", tag));
  }
}

void grad_block(GradScore& gs) {
  BlockConfig cfg;
  cfg.d_model = 4;
  cfg.expand = 2;
  cfg.state_dim = 3;
  cfg.conv_kernel = 3;
  cfg.dt_rank = 2;
  Rng rng(73, 0);
  auto w = init_block_weights<double>(cfg, rng);
  Modulation<double> m{TensorD::rand_uniform({4}, rng, 0.5, 1.5), TensorD::randn({4}, rng, 0.2),
                       TensorD::rand_uniform({4}, rng, 0.5, 1.5)};
  auto x = TensorD::randn({5, 4}, rng);
  auto probe = TensorD::randn({5, 4}, rng);
  auto loss = [&](const Modulation<double>& bm, const TensorD& bx) {
    return sum(mul(block_forward(bx, w, bm, cfg), probe));
  };
  for (auto& [name, tensor] : w.params()) {
    auto original = *tensor;
    gs.note(gradient_check(
                [&](const TensorD& t) {
                  *tensor = t;
                  auto v = loss(m, x);
                  *tensor = original;
                  return v;
                },
                original, 1e-5),
            strf("block/%s", name.c_str()));
  }
  gs.note(gradient_check([&](const TensorD& t) { return loss(m, t); }, x, 1e-5), "block/x");
  gs.note(gradient_check([&](const TensorD& t) { return loss({t, m.beta, m.gamma}, x); }, m.alpha,
                         1e-5),
          "block/alpha");
  gs.note(gradient_check([&](const TensorD& t) { return loss({m.alpha, t, m.gamma}, x); }, m.beta,
                         1e-5),
          "block/beta");
  gs.note(gradient_check([&](const TensorD& t) { return loss({m.alpha, m.beta, t}, x); }, m.gamma,
                         1e-5),
          "block/gamma");
}

void grad_model(GradScore& gs) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.embed_dim = 8;
  cfg.n_groups = 2;
  cfg.vocab_size = 6;
  cfg.n_classes = 3;
  cfg.seq_len = 4;
  cfg.state_dim = 3;
  cfg.conv_kernel = 2;
  cfg.dt_rank = 2;

  TokenSequence seq;
  seq.class_id = 1;
  seq.tokens = {2, 5, 0, 3};

  for (bool tie : {false, true}) {
    ModelConfig cc = cfg;
    cc.tie_head = tie;
    Rng rng(77 + uint64_t(tie), 0);
    auto w = init_model<double>(cc, rng);
    for (auto& v : w.class_embed.data()) v = rng.normal() * 0.3;
    for (auto& v : w.cond.W.data()) v = rng.normal() * 0.15;
    for (auto& [name, t] : w.params()) {
      auto flat = TensorD::from({t->numel()}, t->data());
      TensorD* slot = t;
      Shape orig = slot->shape();
      auto f = [&](const TensorD& v) {
        TensorD shaped = reshape(v, orig);
        shaped.set_name(slot->name());
        TensorD saved = *slot;
        *slot = shaped;
        auto loss = nll_loss(model_forward(seq, w, seq.class_id), seq.tokens);
        *slot = saved;
        return loss;
      };
      gs.note(gradient_check(f, flat, 1e-5),
              strf("model%s/%s", tie ? "-tied" : "", name.c_str()));
    }
  }
}

std::string c03_gradients() {
  GradScore gs;
  grad_primitives(gs);
  grad_scan(gs);
  grad_block(gs);
  grad_model(gs);
  clear_tape<double>();
  require(gs.worst < 1e-4,
          strf("max rel err %.3e at %s (tol 1e-4)", gs.worst, gs.where.c_str()));
  return strf("%d checks over primitives, scan, block, full model loss: max rel err %.1e (%s) < 1e-4",
              gs.checks, gs.worst, gs.where.c_str());
}

// --- 04: grouped conditioning degenerations ----------------------------------

std::string c04_cond_grouping() {
  NoGrad ng;
  int values = 0;
  // G=1 against a single shared regression
  {
    const int N = 6, d = 4;
    GroupSpec s{N, 1, d};
    Rng rng(19, 0);
    CondWeights<double> w;
    w.W = TensorD::randn({1, d, 3 * d}, rng);
    w.b = TensorD::randn({N, 3 * d}, rng);
    auto c = TensorD::randn({d}, rng);
    auto shared = reshape(w.W, {int64_t(d), int64_t(3 * d)});
    for (int i = 0; i < N; ++i) {
      auto m = regress_modulation(c, w, i, s);
      auto ref =
          add(matmul(reshape(swish(c), {1, d}), shared), reshape(slice(w.b, 0, i, 1), {3 * d}));
      for (int j = 0; j < d; ++j) {
        require(m.alpha.data()[j] == ref.data()[j] && m.beta.data()[j] == ref.data()[d + j] &&
                    m.gamma.data()[j] == ref.data()[2 * d + j],
                strf("G=1 layer %d deviates from the shared reference", i));
        values += 3;
      }
    }
  }
  // G=N against vanilla per-layer regression
  {
    const int N = 5, d = 3;
    GroupSpec s{N, N, d};
    Rng rng(23, 0);
    CondWeights<double> w;
    w.W = TensorD::randn({N, d, 3 * d}, rng);
    w.b = TensorD::randn({N, 3 * d}, rng);
    auto c = TensorD::randn({d}, rng);
    for (int i = 0; i < N; ++i) {
      auto m = regress_modulation(c, w, i, s);
      auto Wi = reshape(slice(w.W, 0, i, 1), {d, 3 * d});
      auto ref = add(matmul(reshape(swish(c), {1, d}), Wi), reshape(slice(w.b, 0, i, 1), {3 * d}));
      for (int j = 0; j < d; ++j) {
        require(m.alpha.data()[j] == ref.data()[j] && m.beta.data()[j] == ref.data()[d + j] &&
                    m.gamma.data()[j] == ref.data()[2 * d + j],
                strf("G=N layer %d deviates from the per-layer reference", i));
        values += 3;
      }
    }
  }
  std::vector<int64_t> counts;
  for (int G = 1; G <= 6; ++G) counts.push_back(cond_param_count({6, G, 16}));
  for (size_t i = 1; i < counts.size(); ++i)
    require(counts[i] > counts[i - 1], strf("cond_param_count not strictly increasing at G=%zu", i + 1));
  clear_tape<double>();
  return strf("G=1==shared and G=N==per-layer bitwise (%d values); cond_param_count strictly rises G=1..6 (%lld -> %lld)",
              values, (long long)counts.front(), (long long)counts.back());
}

// --- 05: incremental decode vs full prefix -----------------------------------

std::string c05_incremental_decode() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.embed_dim = 8;
  cfg.n_groups = 2;
  cfg.vocab_size = 12;
  cfg.n_classes = 3;
  cfg.seq_len = 256;
  cfg.state_dim = 3;
  cfg.conv_kernel = 2;
  cfg.dt_rank = 2;
  Rng rng(91, 0);
  auto w = init_model<double>(cfg, rng);
  for (auto& v : w.class_embed.data()) v = rng.normal() * 0.3;
  for (auto& v : w.cond.W.data()) v = rng.normal() * 0.15;

  TokenSequence seq;
  seq.class_id = 1;
  Rng tok(92, 0);
  for (int t = 0; t < cfg.seq_len; ++t) seq.tokens.push_back(tok.uniform_int(cfg.vocab_size));

  NoGrad ng;
  auto full = model_forward(seq, w, seq.class_id);
  auto mods = regress_all(w, seq.class_id);
  auto st = init_decode_state<double>(cfg);
  double worst = 0;
  for (int t = 0; t < cfg.seq_len; ++t) {
    const int in = t == 0 ? seq.class_id : int(seq.tokens[t - 1]);
    auto logits = model_step(w, mods, st, in);
    for (int v = 0; v < cfg.vocab_size; ++v) {
      const double ref = full.data()[size_t(t) * cfg.vocab_size + v];
      worst = std::max(worst, std::abs(logits.data()[v] - ref) / std::max(1.0, std::abs(ref)));
    }
  }
  require(worst <= 1e-8, strf("step vs full-prefix logits: max rel err %.3e > 1e-8", worst));
  return strf("256 decode steps on a random micro model: max rel err vs full forward %.1e <= 1e-8",
              worst);
}

// --- 06: published parameter budgets -----------------------------------------

std::string c06_param_budget() {
  const int64_t b = param_count(aim_b_config());
  const int64_t l = param_count(aim_l_config());
  const double db = double(b) / 148e6 - 1.0;
  const double dl = double(l) / 350e6 - 1.0;
  require(std::abs(db) <= 0.10, strf("B-size count %lld is %+.1f%% from 148M", (long long)b, db * 100));
  require(std::abs(dl) <= 0.10, strf("L-size count %lld is %+.1f%% from 350M", (long long)l, dl * 100));
  return strf("B %.1fM vs 148M (%+.1f%%), L %.1fM vs 350M (%+.1f%%), tol +-10%%", b / 1e6,
              db * 100, l / 1e6, dl * 100);
}

// --- 07: seeded training smoke -----------------------------------------------

std::string c07_train_smoke() {
  SyntheticSpec spec;  // 10 classes, 16x16 px, patch 2 -> 64 tokens over vocab 64
  art.smoke = build_dataset(spec, 50, 1);

  ModelConfig mc;
  mc.n_layers = 2;
  mc.embed_dim = 32;
  mc.state_dim = 2;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.base_lr_per_256 = 0.016;
  tc.warmup_steps = 20;
  tc.steps = 1000;
  tc.seed = 0;

  Rng init(tc.seed, 0);
  auto w = init_model<float>(mc, init);
  auto opt = init_optim(w);
  auto res = train(w, opt, art.smoke, tc);

  const double lo = *std::min_element(res.losses.begin(), res.losses.begin() + 200);
  const double thr = 0.5 * std::log(64.0);

  // fresh same-seed run at the 200-step budget; per-step derived rng makes its
  // log a strict prefix of the longer run's
  Rng init2(tc.seed, 0);
  auto w2 = init_model<float>(mc, init2);
  auto opt2 = init_optim(w2);
  TrainConfig tc2 = tc;
  tc2.steps = 200;
  auto res2 = train(w2, opt2, art.smoke, tc2);
  size_t pos = 0;
  for (int i = 0; i < 200; ++i) pos = res.metrics.find('\n', pos) + 1;
  const bool same = res.metrics.compare(0, pos, res2.metrics) == 0;

  art.cfg = mc;
  art.budget = tc;
  art.model = std::move(w);
  art.optim = std::move(opt);
  require(lo <= thr, strf("min loss over steps 1..200 = %.4f > %.4f (= ln64 / 2)", lo, thr));
  require(same, "same-seed 200-step rerun produced a different loss log");
  return strf("min loss in 200 steps %.3f <= %.4f (ln64/2); same-seed log identical; 1000-step nll %.3f",
              lo, thr, res.final_nll);
}

// --- 08: guidance identities and effect --------------------------------------

std::string c08_guidance() {
  require(art.model.has_value(), "training artifacts unavailable (train-smoke failed)");
  auto& w = *art.model;

  Rng r(777, 0);
  auto u = TensorD::randn({64}, r);
  auto c = TensorD::randn({64}, r);
  auto g1v = cfg_combine(u, c, 1.0);
  auto g0v = cfg_combine(u, c, 0.0);
  require(std::memcmp(g1v.data().data(), c.data().data(), sizeof(double) * 64) == 0,
          "w=1 combine is not bitwise the conditional logits");
  require(std::memcmp(g0v.data().data(), u.data().data(), sizeof(double) * 64) == 0,
          "w=0 combine is not bitwise the unconditional logits");
  auto aff = cfg_combine(TensorD::from({1}, {0.1}), TensorD::from({1}, {0.3}), 2.0);
  require(aff.data()[0] == 0.5, strf("2*0.3 - 0.1 gave %.17g, expected exactly 0.5", aff.data()[0]));
  clear_tape<double>();

  // teacher-forced sessions against hand-run conditional / null streams
  {
    NoGrad ng;
    std::vector<int> script;
    Rng sr(881, 0);
    for (int t = 0; t < 24; ++t) script.push_back(int(sr.uniform_int(64)));
    const int cls = 3;
    GuidanceConfig g1;
    g1.w = 1.0;
    auto s1 = begin_session(w, cls, Rng(5, 5), g1);
    auto mods = regress_all(w, cls);
    auto st = init_decode_state<float>(art.cfg);
    for (size_t t = 0; t < script.size(); ++t) {
      if (t > 0) s1.last_token = script[t - 1];
      auto guided = session_logits(s1, w, g1);
      auto direct = model_step(w, mods, st, t == 0 ? cls : script[t - 1]);
      require(std::memcmp(guided.data().data(), direct.data().data(), sizeof(float) * 64) == 0,
              strf("w=1 session deviates from the conditional stream at t=%zu", t));
    }
    GuidanceConfig g0;
    g0.w = 0.0;
    auto s0 = begin_session(w, cls, Rng(5, 5), g0);
    auto mods0 = regress_all(w, art.cfg.null_class());
    auto st0 = init_decode_state<float>(art.cfg);
    for (size_t t = 0; t < script.size(); ++t) {
      if (t > 0) s0.last_token = script[t - 1];
      auto guided = session_logits(s0, w, g0);
      auto direct = model_step(w, mods0, st0, t == 0 ? art.cfg.null_class() : script[t - 1]);
      require(std::memcmp(guided.data().data(), direct.data().data(), sizeof(float) * 64) == 0,
              strf("w=0 session deviates from the null stream at t=%zu", t));
    }
  }

  auto clf = fit_centroid_classifier(art.smoke);
  auto med = [&](double wv) {
    GuidanceConfig g;
    g.w = wv;
    std::vector<double> xs;
    for (uint64_t s : std::vector<uint64_t>{11, 22, 33})
      xs.push_back(class_consistency(w, clf, g, 8, s));
    return median(xs);
  };
  const double m2 = med(2.0);
  const double m0 = med(0.0);
  require(m2 >= m0, strf("median class consistency w=2 %.3f < w=0 %.3f", m2, m0));
  return strf("w=1/w=0 sessions bitwise-match their single streams over 24 steps; 2*0.3-0.1 == 0.5; consistency median w=2 %.3f >= w=0 %.3f",
              m2, m0);
}

// --- 09: positional-encoding ablation ----------------------------------------

std::string c09_pe_ablation() {
  // 4x96 px at patch 2: a 2x48 grid whose 6-column ramp plateaus exceed the
  // conv reach, so column identity must come from positions, not neighbors
  SyntheticSpec ps;
  ps.image_h = 4;
  ps.image_w = 96;
  auto data = build_dataset(ps, 50, 1);
  const int W = ps.grid_w();

  double gt_acc = 1.0, mir_acc = 0.0;
  for (int cls : {0, 2}) {
    std::vector<TokenGrid> gt, mir;
    for (int i = 0; i < 8; ++i) {
      auto g = generate_grid(ps, cls, 1, i);
      gt.push_back(g);
      auto m = g;
      for (int row = 0; row < m.h; ++row)
        std::reverse(m.tokens.begin() + row * m.w, m.tokens.begin() + (row + 1) * m.w);
      mir.push_back(std::move(m));
    }
    gt_acc = std::min(gt_acc, column_accuracy(gt, ps, cls));
    mir_acc = std::max(mir_acc, column_accuracy(mir, ps, cls));
  }
  require(gt_acc == 1.0, strf("ground-truth grids score %.4f, expected exactly 1.0", gt_acc));
  require(mir_acc <= 1.0 / W, strf("mirrored grids score %.4f > 1/%d", mir_acc, W));

  AblationConfig a;
  a.base.n_layers = 2;
  a.base.embed_dim = 32;
  a.base.state_dim = 2;
  a.base.conv_kernel = 2;
  a.base.seq_len = ps.seq_len();
  a.train.steps = 500;
  a.train.batch_size = 16;
  a.train.base_lr_per_256 = 0.016;
  a.train.warmup_steps = 20;
  a.seeds = {1, 2, 3};
  a.groups = {1};
  a.cfg_w = {};
  a.samples_per_class = 8;
  auto res = ablation_suite(data, a);

  std::vector<double> with_pe, without;
  for (auto& row : res.rows) (row.pe == PeKind::kNone ? without : with_pe).push_back(row.col_acc);
  require(with_pe.size() == 3 && without.size() == 3, "unexpected ablation row layout");
  const double mp = median(with_pe);
  const double mn = median(without);
  require(mp - mn >= 0.05,
          strf("median column-accuracy gap %.3f < 0.05 (pe %.3f, none %.3f)", mp - mn, mp, mn));
  return strf("metric pins exact (truth 1.0, mirrored %.3f <= 1/%d); 3-seed medians: learned pe %.3f vs none %.3f, gap %.3f >= 0.05",
              mir_acc, W, mp, mn, mp - mn);
}

// --- 10: decode cost scaling -------------------------------------------------

std::string c10_decode_scaling() {
  ModelConfig bc;
  bc.n_layers = 2;
  bc.embed_dim = 32;
  bc.seq_len = 2048;
  const std::vector<int64_t> lengths = {64, 128, 256, 512, 1024, 2048};
  auto rm = decode_scaling_bench("mamba", bc, lengths, 8, 3, 1, 0);
  auto ra = decode_scaling_bench("attention", bc, lengths, 16, 9, 3, 0);
  require(rm.slope <= 1.2, strf("recurrent decode slope %.3f > 1.2", rm.slope));
  require(rm.step_ratio <= 1.3,
          strf("recurrent per-step ratio t=2048 vs t=64 is %.3f > 1.3", rm.step_ratio));
  require(ra.slope >= 1.7, strf("attention decode slope %.3f < 1.7", ra.slope));
  return strf("log-log time slope: recurrent %.2f <= 1.2, attention %.2f >= 1.7; recurrent late/early step ratio %.2f <= 1.3",
              rm.slope, ra.slope, rm.step_ratio);
}

// --- 11: serialization -------------------------------------------------------

std::string c11_serialization() {
  require(art.model.has_value(), "training artifacts unavailable (train-smoke failed)");
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "aim_acceptance_scratch";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // save -> load is bitwise on weights, moments, step, and the config block
  const std::string ck = (dir / "trained.aimc").string();
  save_checkpoint(ck, *art.model, *art.optim, {{"probe.key", "probe-value"}});
  auto back = load_checkpoint(ck);
  auto orig_params = art.model->params();
  auto back_params = back.weights.params();
  require(orig_params.size() == back_params.size(), "parameter census changed in round-trip");
  int tensors = 0;
  for (size_t i = 0; i < orig_params.size(); ++i) {
    require(orig_params[i].first == back_params[i].first,
            strf("parameter order changed at index %zu", i));
    auto& a = *orig_params[i].second;
    auto& b = *back_params[i].second;
    require(a.numel() == b.numel() &&
                std::memcmp(a.data().data(), b.data().data(), sizeof(float) * a.numel()) == 0,
            strf("tensor %s not bitwise after round-trip", orig_params[i].first.c_str()));
    ++tensors;
  }
  require(back.optim.step == art.optim->step, "optimizer step count changed");
  require(back.optim.m.size() == art.optim->m.size() && back.optim.v.size() == art.optim->v.size(),
          "moment census changed");
  for (size_t i = 0; i < back.optim.m.size(); ++i) {
    require(std::memcmp(back.optim.m[i].data().data(), art.optim->m[i].data().data(),
                        sizeof(float) * back.optim.m[i].numel()) == 0 &&
                std::memcmp(back.optim.v[i].data().data(), art.optim->v[i].data().data(),
                            sizeof(float) * back.optim.v[i].numel()) == 0,
            strf("optimizer moments differ at index %zu", i));
  }
  require(back.config.at("probe.key") == "probe-value", "extra config entry lost");

  // interrupted 6+6 run equals the straight 12-step run
  ModelConfig rm;
  rm.n_layers = 2;
  rm.embed_dim = 16;
  rm.state_dim = 2;
  TrainConfig ta;
  ta.steps = 12;
  ta.batch_size = 4;
  ta.seed = 9;
  Rng ia(ta.seed, 0);
  auto wa = init_model<float>(rm, ia);
  auto oa = init_optim(wa);
  auto full = train(wa, oa, art.smoke, ta);

  Rng ib(ta.seed, 0);
  auto wb = init_model<float>(rm, ib);
  auto ob = init_optim(wb);
  TrainConfig th = ta;
  th.steps = 6;
  auto first = train(wb, ob, art.smoke, th);
  const std::string half = (dir / "half.aimc").string();
  save_checkpoint(half, wb, ob);
  auto resumed = load_checkpoint(half);
  auto second = train(resumed.weights, resumed.optim, art.smoke, ta);
  require(full.metrics == first.metrics + second.metrics, "resumed loss log differs");
  auto pa = wa.params();
  auto pb = resumed.weights.params();
  for (size_t i = 0; i < pa.size(); ++i)
    require(std::memcmp(pa[i].second->data().data(), pb[i].second->data().data(),
                        sizeof(float) * pa[i].second->numel()) == 0,
            strf("resumed weights differ at %s", pa[i].first.c_str()));

  // dataset files regenerate byte-identically from (spec, seed)
  auto again = build_dataset(art.smoke.spec, art.smoke.n_per_class, art.smoke.seed);
  const fs::path fa = dir / "a.aimd", fb = dir / "b.aimd";
  write_dataset(fa.string(), art.smoke);
  write_dataset(fb.string(), again);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(bool(in), "cannot reopen " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string bytes_a = slurp(fa), bytes_b = slurp(fb);
  require(!bytes_a.empty() && bytes_a == bytes_b, "rebuilt dataset file is not byte-identical");
  fs::remove_all(dir);
  return strf("checkpoint round-trip bitwise (%d tensors + %zu moment pairs); 6+6 resume == straight 12 steps; dataset regenerates byte-identically (%zu bytes)",
              tensors, back.optim.m.size(), bytes_a.size());
}

// --- 12: width scaling at equal budget ---------------------------------------

std::string c12_width_scaling() {
  SyntheticSpec ss;
  ss.image_h = 8;
  ss.image_w = 8;  // 16 tokens per image
  auto full = build_dataset(ss, 60, 5);
  Dataset tr = full, ev = full;
  tr.records.clear();
  ev.records.clear();
  for (size_t i = 0; i < full.records.size(); ++i)
    (i % 5 == 4 ? ev : tr).records.push_back(full.records[i]);

  std::vector<double> nll64, nll128;
  for (int d : {64, 128}) {
    for (uint64_t seed : std::vector<uint64_t>{1, 2, 3}) {
      ModelConfig mc;
      mc.n_layers = 2;
      mc.embed_dim = d;
      mc.seq_len = 16;
      TrainConfig tc;
      tc.steps = 200;
      tc.batch_size = 8;
      tc.base_lr_per_256 = 0.032;
      tc.warmup_steps = 20;
      tc.seed = seed;
      Rng init(seed, 4242);
      auto w = init_model<float>(mc, init);
      auto opt = init_optim(w);
      train(w, opt, tr, tc);
      (d == 64 ? nll64 : nll128).push_back(nll_eval(w, ev, 0, ev.records.size()).nll);
    }
  }
  const double m64 = median(nll64);
  const double m128 = median(nll128);
  require(m128 <= m64, strf("median held-out nll d=128 %.4f > d=64 %.4f", m128, m64));
  return strf("equal budget, 3 seeds, held-out fifth of the data: median nll d=128 %.3f <= d=64 %.3f",
              m128, m64);
}

struct Entry {
  int id;
  const char* name;
  std::string (*fn)();
};

}  // namespace

int main() {
  const Entry entries[] = {
      {1, "scan-equivalence", c01_scan_equivalence},
      {2, "zoh-discretize", c02_zoh},
      {3, "gradient-suite", c03_gradients},
      {4, "cond-grouping", c04_cond_grouping},
      {5, "incremental-decode", c05_incremental_decode},
      {6, "param-budget", c06_param_budget},
      {7, "train-smoke", c07_train_smoke},
      {8, "guidance", c08_guidance},
      {9, "pe-ablation", c09_pe_ablation},
      {10, "decode-scaling", c10_decode_scaling},
      {11, "serialization", c11_serialization},
      {12, "width-scaling", c12_width_scaling},
  };
  int passed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& e : entries) {
    const auto s0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    try {
      detail = e.fn();
    } catch (const std::exception& ex) {
      ok = false;
      detail = ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    std::printf("[%s] %02d %-18s %s [%.1fs]\n", ok ? "PASS" : "FAIL", e.id, e.name, detail.c_str(),
                secs);
    std::fflush(stdout);
    passed += ok;
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("acceptance: %d/12 passed [%.1fs total]\n", passed, total);
  return passed == 12 ? 0 : 1;
}
