#include "aim/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace aim {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void matvec(const float* w, const float* x, float* y, int in, int out) {
  // w is [in, out] row-major; y = x^T w
  for (int j = 0; j < out; ++j) y[j] = 0.0f;
  for (int i = 0; i < in; ++i) {
    const float xi = x[i];
    const float* row = w + static_cast<size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

std::vector<float> randn_raw(int64_t n, Rng& rng, float stddev) {
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.normal()) * stddev;
  return v;
}

}  // namespace

AttentionBaseline make_attention_baseline(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  AttentionBaseline m;
  m.cfg = cfg;
  m.heads = std::max(1, cfg.embed_dim / 64);
  const int d = cfg.embed_dim;
  check(d % m.heads == 0, "attention: embed_dim must be divisible by the head count");
  Rng rng(seed, 0);
  m.token_embed = randn_raw(static_cast<int64_t>(cfg.vocab_size) * d, rng, 0.02f);
  m.class_embed = randn_raw(static_cast<int64_t>(cfg.n_classes + 1) * d, rng, 0.02f);
  m.pos_embed = randn_raw(static_cast<int64_t>(cfg.seq_len + 1) * d, rng, 0.02f);
  m.layers.resize(static_cast<size_t>(cfg.n_layers));
  const float ws = 1.0f / std::sqrt(static_cast<float>(d));
  for (auto& layer : m.layers) {
    layer.wqkv = randn_raw(static_cast<int64_t>(d) * 3 * d, rng, ws);
    layer.wo = randn_raw(static_cast<int64_t>(d) * d, rng, ws);
  }
  m.head = randn_raw(static_cast<int64_t>(d) * cfg.vocab_size, rng, 0.02f);
  return m;
}

AttnStream attn_begin(const AttentionBaseline& m) {
  AttnStream s;
  s.K.resize(m.layers.size());
  s.V.resize(m.layers.size());
  return s;
}

void attn_step(const AttentionBaseline& m, AttnStream& s, int token_or_class,
               std::vector<float>& logits_out) {
  const ModelConfig& cfg = m.cfg;
  const int d = cfg.embed_dim, H = m.heads, dh = d / H;
  check(s.t < cfg.seq_len, "attention: stream exceeded its sequence capacity");

  std::vector<float> x(static_cast<size_t>(d));
  if (s.t == 0) {
    check(token_or_class >= 0 && token_or_class <= cfg.n_classes,
          "attention: class id out of range");
    const float* row = m.class_embed.data() + static_cast<size_t>(token_or_class) * d;
    std::copy(row, row + d, x.begin());
  } else {
    check(token_or_class >= 0 && token_or_class < cfg.vocab_size,
          "attention: token out of range");
    const float* row = m.token_embed.data() + static_cast<size_t>(token_or_class) * d;
    std::copy(row, row + d, x.begin());
  }
  const float* pos = m.pos_embed.data() + static_cast<size_t>(s.t) * d;
  for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += pos[i];

  std::vector<float> qkv(static_cast<size_t>(3) * d), ctx(static_cast<size_t>(d)),
      out(static_cast<size_t>(d));
  const int T = s.t + 1;
  std::vector<float> scores(static_cast<size_t>(T));
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

  for (size_t li = 0; li < m.layers.size(); ++li) {
    const auto& layer = m.layers[li];
    matvec(layer.wqkv.data(), x.data(), qkv.data(), d, 3 * d);
    auto& K = s.K[li];
    auto& V = s.V[li];
    K.insert(K.end(), qkv.begin() + d, qkv.begin() + 2 * d);
    V.insert(V.end(), qkv.begin() + 2 * d, qkv.begin() + 3 * d);

    for (int h = 0; h < H; ++h) {
      const float* q = qkv.data() + h * dh;
      for (int i = 0; i < T; ++i) {
        const float* k = K.data() + static_cast<size_t>(i) * d + h * dh;
        float dot = 0.0f;
        for (int c = 0; c < dh; ++c) dot += q[c] * k[c];
        scores[static_cast<size_t>(i)] = dot * inv_sqrt;
      }
      float mx = scores[0];
      for (int i = 1; i < T; ++i) mx = std::max(mx, scores[static_cast<size_t>(i)]);
      float sum = 0.0f;
      for (int i = 0; i < T; ++i) {
        scores[static_cast<size_t>(i)] = std::exp(scores[static_cast<size_t>(i)] - mx);
        sum += scores[static_cast<size_t>(i)];
      }
      float* c_out = ctx.data() + h * dh;
      for (int c = 0; c < dh; ++c) c_out[c] = 0.0f;
      for (int i = 0; i < T; ++i) {
        const float p = scores[static_cast<size_t>(i)] / sum;
        const float* v = V.data() + static_cast<size_t>(i) * d + h * dh;
        for (int c = 0; c < dh; ++c) c_out[c] += p * v[c];
      }
    }
    matvec(layer.wo.data(), ctx.data(), out.data(), d, d);
    for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += out[static_cast<size_t>(i)];
  }

  logits_out.resize(static_cast<size_t>(cfg.vocab_size));
  matvec(m.head.data(), x.data(), logits_out.data(), d, cfg.vocab_size);
  s.t += 1;
}

double fit_loglog_slope(const std::vector<int64_t>& lengths, const std::vector<double>& times) {
  check(lengths.size() == times.size(), "slope fit: length/time count mismatch");
  check(lengths.size() >= 2, "slope fit: need at least two points");
  const size_t n = lengths.size();
  std::vector<double> xs(n), ys(n);
  for (size_t i = 0; i < n; ++i) {
    check(lengths[i] > 0 && times[i] > 0, "slope fit: lengths and times must be positive");
    xs[i] = std::log(static_cast<double>(lengths[i]));
    ys[i] = std::log(times[i]);
  }
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0, den = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

namespace {

struct RunTimes {
  double total_ms = 0;
  double early_ms = 0;  // first-64-step window
  double late_ms = 0;   // last-64-step window
};

template <typename StepFn>
RunTimes timed_decode(int64_t length, int batch, const std::vector<std::vector<int>>& feed,
                      StepFn&& step_one) {
  // step_one(stream, token) advances one stream by one position; token -1
  // means the class row at t=0
  RunTimes rt;
  const int64_t w = 64;
  const bool windows = length >= 2 * w;
  auto t0 = Clock::now();
  for (int64_t t = 0; t < length; ++t) {
    auto s0 = Clock::now();
    for (int b = 0; b < batch; ++b)
      step_one(b, t == 0 ? -1 : feed[static_cast<size_t>(b)][static_cast<size_t>(t - 1)]);
    auto s1 = Clock::now();
    if (windows) {
      if (t < w) rt.early_ms += ms_between(s0, s1);
      if (t >= length - w) rt.late_ms += ms_between(s0, s1);
    }
  }
  rt.total_ms = ms_between(t0, Clock::now());
  if (!windows) {
    rt.early_ms = rt.total_ms / 2;
    rt.late_ms = rt.total_ms / 2;
  }
  return rt;
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

double median(std::vector<double> xs) {
  check(!xs.empty(), "median: empty input");
  return median_of(std::move(xs));
}

BenchReport decode_scaling_bench(const std::string& kind, const ModelConfig& cfg,
                                 const std::vector<int64_t>& lengths, int batch, int trials,
                                 int warmup, uint64_t seed) {
  check(kind == "mamba" || kind == "attention", "bench: kind must be 'mamba' or 'attention'");
  check(lengths.size() >= 4, "bench: need at least four lengths");
  for (size_t i = 1; i < lengths.size(); ++i)
    check(lengths[i] > lengths[i - 1], "bench: lengths must be strictly increasing");
  check(lengths.front() >= 1 && lengths.back() >= 16 * lengths.front(),
        "bench: lengths must span at least a 16x range");
  check(lengths.back() <= cfg.seq_len, "bench: max length exceeds the model's seq_len");
  check(batch >= 1 && trials >= 1 && warmup >= 0, "bench: bad batch/trial counts");

  BenchReport rep;
  rep.kind = kind;
  rep.model = cfg;
  rep.batch = batch;
  rep.trials = trials;
  rep.warmup = warmup;

  // fixed token feed so both kinds decode the identical stream
  Rng frng(seed, 77);
  std::vector<std::vector<int>> feed(static_cast<size_t>(batch));
  for (auto& f : feed) {
    f.resize(static_cast<size_t>(lengths.back()));
    for (auto& t : f) t = static_cast<int>(frng.uniform_int(cfg.vocab_size));
  }

  ModelWeights<float> w;
  std::vector<Modulation<float>> mods;
  AttentionBaseline attn;
  const int cls = 0;
  if (kind == "mamba") {
    Rng mrng(seed, 1);
    w = init_model<float>(cfg, mrng);
    NoGrad ng;
    mods = regress_all(w, cls);
    const BlockConfig bc = cfg.block();
    rep.state_bytes = static_cast<size_t>(cfg.n_layers) *
                      (static_cast<size_t>(bc.conv_kernel - 1) * bc.d_inner() +
                       static_cast<size_t>(bc.d_inner()) * bc.state_dim) *
                      sizeof(float);
  } else {
    attn = make_attention_baseline(cfg, seed);
    rep.state_bytes = static_cast<size_t>(cfg.n_layers) * 2 *
                      static_cast<size_t>(lengths.back()) * cfg.embed_dim * sizeof(float);
  }

  for (int64_t len : lengths) {
    std::vector<double> totals, earlies, lates;
    for (int trial = 0; trial < warmup + trials; ++trial) {
      RunTimes rt;
      if (kind == "mamba") {
        NoGrad ng;
        std::vector<DecodeState<float>> states;
        states.reserve(static_cast<size_t>(batch));
        for (int b = 0; b < batch; ++b) states.push_back(init_decode_state<float>(cfg));
        rt = timed_decode(len, batch, feed, [&](int b, int tok) {
          model_step(w, mods, states[static_cast<size_t>(b)], tok < 0 ? cls : tok);
        });
      } else {
        std::vector<AttnStream> streams;
        streams.reserve(static_cast<size_t>(batch));
        for (int b = 0; b < batch; ++b) streams.push_back(attn_begin(attn));
        std::vector<float> logits;
        rt = timed_decode(len, batch, feed, [&](int b, int tok) {
          attn_step(attn, streams[static_cast<size_t>(b)], tok < 0 ? cls : tok, logits);
        });
      }
      if (trial >= warmup) {
        totals.push_back(rt.total_ms);
        earlies.push_back(rt.early_ms);
        lates.push_back(rt.late_ms);
      }
    }
    BenchPoint p;
    p.length = len;
    p.total_ms = median_of(totals);
    check(p.total_ms > 0, "bench: timer resolution insufficient for length " +
                              std::to_string(len));
    p.tokens_per_sec = static_cast<double>(len) * batch / (p.total_ms / 1000.0);
    p.early_step_ms = median_of(earlies) / 64.0;
    p.late_step_ms = median_of(lates) / 64.0;
    rep.points.push_back(p);
  }

  std::vector<int64_t> xs;
  std::vector<double> ys;
  for (const auto& p : rep.points) {
    xs.push_back(p.length);
    ys.push_back(p.total_ms);
  }
  rep.slope = fit_loglog_slope(xs, ys);
  const auto& last = rep.points.back();
  rep.step_ratio = last.late_step_ms / last.early_step_ms;
  return rep;
}

std::string bench_report_text(const BenchReport& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "decode scaling: kind=%s layers=%d d=%d state=%d batch=%d trials=%d warmup=%d\n",
                r.kind.c_str(), r.model.n_layers, r.model.embed_dim, r.model.state_dim, r.batch,
                r.trials, r.warmup);
  out += buf;
  out += "  length    total_ms     tok/s   early_ms/step   late_ms/step\n";
  for (const auto& p : r.points) {
    std::snprintf(buf, sizeof(buf), "  %6lld  %10.3f  %8.0f  %14.6f  %13.6f\n",
                  static_cast<long long>(p.length), p.total_ms, p.tokens_per_sec, p.early_step_ms,
                  p.late_step_ms);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "  slope=%.3f step_ratio=%.3f state_bytes=%zu\n", r.slope,
                r.step_ratio, r.state_bytes);
  out += buf;
  return out;
}

std::string bench_report_csv(const BenchReport& r) {
  char buf[128];
  std::string out = "variant,metric,value\n";
  auto row = [&](const std::string& metric, double v) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9g\n", r.kind.c_str(), metric.c_str(), v);
    out += buf;
  };
  for (const auto& p : r.points) {
    row("total_ms_" + std::to_string(p.length), p.total_ms);
    row("tokens_per_sec_" + std::to_string(p.length), p.tokens_per_sec);
  }
  row("slope", r.slope);
  row("step_ratio", r.step_ratio);
  row("state_bytes", static_cast<double>(r.state_bytes));
  return out;
}

std::string bench_report_dat(const BenchReport& r) {
  std::string out = "# length total_ms tokens_per_sec\n";
  char buf[128];
  for (const auto& p : r.points) {
    std::snprintf(buf, sizeof(buf), "%lld %.6f %.3f\n", static_cast<long long>(p.length),
                  p.total_ms, p.tokens_per_sec);
    out += buf;
  }
  return out;
}

void write_bench_report(const BenchReport& r, const std::string& prefix) {
  struct Item {
    const char* ext;
    std::string body;
  } items[] = {{".txt", bench_report_text(r)},
               {".csv", bench_report_csv(r)},
               {".dat", bench_report_dat(r)}};
  for (const auto& it : items) {
    std::ofstream f(prefix + it.ext, std::ios::trunc);
    check(static_cast<bool>(f), "bench: cannot write '" + prefix + it.ext + "'");
    f << it.body;
  }
}

// --- structure metrics ----------------------------------------------------

double column_accuracy(const std::vector<TokenGrid>& grids, const SyntheticSpec& spec,
                       int class_id) {
  check(class_id == 0 || class_id == 2,
        "column_accuracy: class must be a column-determined ramp (0 or 2)");
  check(!grids.empty(), "column_accuracy: no grids");
  const int H = spec.grid_h(), W = spec.grid_w();
  int64_t hits = 0, cells = 0;
  for (const auto& g : grids) {
    check(g.h == H && g.w == W, "column_accuracy: grid shape does not match the spec");
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const int level = class_id == 0 ? j * 8 / W : (W - 1 - j) * 8 / W;
        const int expected = 8 * level + class_id;
        const int base = g.tokens[static_cast<size_t>(i) * W + j] & ~4;
        hits += base == expected;
        ++cells;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(cells);
}

NllReport nll_eval(ModelWeights<float>& w, const Dataset& data, size_t begin, size_t end) {
  check(begin < end && end <= data.records.size(), "nll_eval: empty or out-of-range split");
  check(data.spec.seq_len() == w.cfg.seq_len, "nll_eval: dataset seq_len != model seq_len");
  check(data.spec.vocab() == w.cfg.vocab_size, "nll_eval: dataset vocab != model vocab");
  NoGrad ng;
  NllReport rep;
  double total = 0;
  for (size_t i = begin; i < end; ++i) {
    const auto& rec = data.records[i];
    TokenSequence seq;
    seq.class_id = rec.class_id;
    seq.tokens.assign(rec.tokens.begin(), rec.tokens.end());
    total += static_cast<double>(nll_loss(model_forward(seq, w, seq.class_id), seq.tokens).item());
    rep.tokens += static_cast<int64_t>(rec.tokens.size());
  }
  rep.records = end - begin;
  rep.nll = total / static_cast<double>(rep.records);
  return rep;
}

CentroidClassifier fit_centroid_classifier(const Dataset& train) {
  check(!train.records.empty(), "classifier: empty training set");
  CentroidClassifier c;
  c.n_classes = train.spec.n_classes;
  c.vocab = train.spec.vocab();
  c.centroids.assign(static_cast<size_t>(c.n_classes) * c.vocab, 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(c.n_classes), 0);
  for (const auto& rec : train.records) {
    check(rec.class_id < c.n_classes, "classifier: record class out of range");
    counts[rec.class_id] += static_cast<int64_t>(rec.tokens.size());
    for (uint16_t t : rec.tokens) {
      check(t < c.vocab, "classifier: token out of range");
      c.centroids[static_cast<size_t>(rec.class_id) * c.vocab + t] += 1.0;
    }
  }
  for (int k = 0; k < c.n_classes; ++k) {
    check(counts[static_cast<size_t>(k)] > 0,
          "classifier: class " + std::to_string(k) + " has no training records");
    for (int v = 0; v < c.vocab; ++v)
      c.centroids[static_cast<size_t>(k) * c.vocab + v] /=
          static_cast<double>(counts[static_cast<size_t>(k)]);
  }
  return c;
}

int classify(const CentroidClassifier& c, const std::vector<uint16_t>& tokens) {
  check(!tokens.empty(), "classifier: empty token sequence");
  std::vector<double> hist(static_cast<size_t>(c.vocab), 0.0);
  for (uint16_t t : tokens) {
    check(t < c.vocab, "classifier: token out of range");
    hist[t] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(tokens.size());
  int best = 0;
  double best_d = 0;
  for (int k = 0; k < c.n_classes; ++k) {
    double d = 0;
    for (int v = 0; v < c.vocab; ++v) {
      const double diff = hist[static_cast<size_t>(v)] -
                          c.centroids[static_cast<size_t>(k) * c.vocab + v];
      d += diff * diff;
    }
    if (k == 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

double class_consistency(ModelWeights<float>& w, const CentroidClassifier& c,
                         const GuidanceConfig& g, int per_class, uint64_t seed) {
  check(per_class >= 1, "consistency: per_class must be >= 1");
  check(c.n_classes <= w.cfg.n_classes, "consistency: classifier has more classes than the model");
  int64_t hits = 0;
  for (int k = 0; k < c.n_classes; ++k) {
    auto seqs = generate(w, k, per_class, g, mix64(seed, static_cast<uint64_t>(k) + 1));
    for (const auto& seq : seqs) hits += classify(c, seq) == k;
  }
  return static_cast<double>(hits) / (static_cast<double>(c.n_classes) * per_class);
}

// --- ablation suite -------------------------------------------------------

AblationResult ablation_suite(const Dataset& data, const AblationConfig& acfg) {
  check(!acfg.seeds.empty(), "ablation: need at least one seed");
  check(!acfg.groups.empty(), "ablation: need at least one group count");
  check(acfg.base.pe != PeKind::kNone,
        "ablation: base config must carry a positional encoding to ablate");
  for (int g : acfg.groups)
    check(g >= 1 && acfg.base.n_layers % g == 0,
          "ablation: every group count must divide the layer count");
  acfg.train.validate();

  AblationResult res;
  res.cfg = acfg;
  auto clf = fit_centroid_classifier(data);
  const int H = data.spec.grid_h(), W = data.spec.grid_w();

  for (PeKind pe : {PeKind::kNone, acfg.base.pe}) {
    for (int g : acfg.groups) {
      for (uint64_t seed : acfg.seeds) {
        ModelConfig mc = acfg.base;
        mc.pe = pe;
        mc.n_groups = g;
        TrainConfig tc = acfg.train;
        tc.seed = seed;
        Rng irng(seed, 7777);
        auto w = init_model<float>(mc, irng);
        auto opt = init_optim(w);
        auto tr = train(w, opt, data, tc);

        AblationRow row;
        row.variant = std::string(pe == PeKind::kNone ? "no-pe" : "pe") + "/G" + std::to_string(g);
        row.pe = pe;
        row.groups = g;
        row.seed = seed;
        row.params = param_count(mc);
        row.final_nll = tr.final_nll;

        GuidanceConfig g1;
        g1.w = 1.0;
        double acc = 0;
        for (int cls : {0, 2}) {
          auto seqs = generate(w, cls, acfg.samples_per_class, g1,
                               mix64(seed, 100 + static_cast<uint64_t>(cls)));
          std::vector<TokenGrid> grids;
          for (const auto& s : seqs) grids.push_back(unflatten(s, H, W));
          acc += column_accuracy(grids, data.spec, cls);
        }
        row.col_acc = acc / 2.0;

        for (double wv : acfg.cfg_w) {
          GuidanceConfig gw;
          gw.w = wv;
          row.consistency_by_w[wv] = class_consistency(
              w, clf, gw, acfg.samples_per_class,
              mix64(seed, 200 + static_cast<uint64_t>(std::lround(wv * 2))));
        }
        res.rows.push_back(std::move(row));
      }
    }
  }
  return res;
}

std::string ablation_text(const AblationResult& r) {
  std::string out = "ablation: variants x seeds, fixed budget of " +
                    std::to_string(r.cfg.train.steps) + " steps, batch " +
                    std::to_string(r.cfg.train.batch_size) + "\n";
  char buf[256];
  std::string head = "  variant      seed    params   final_nll   col_acc";
  for (double wv : r.cfg.cfg_w) {
    std::snprintf(buf, sizeof(buf), "   cons@w=%g", wv);
    head += buf;
  }
  out += head + "\n";
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "  %-11s %5llu  %8lld  %10.4f  %8.4f", row.variant.c_str(),
                  static_cast<unsigned long long>(row.seed),
                  static_cast<long long>(row.params), row.final_nll, row.col_acc);
    out += buf;
    for (double wv : r.cfg.cfg_w) {
      std::snprintf(buf, sizeof(buf), "  %9.4f", row.consistency_by_w.at(wv));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string ablation_csv(const AblationResult& r) {
  std::string out = "variant,metric,value\n";
  char buf[160];
  for (const auto& row : r.rows) {
    const std::string v = row.variant + "#s" + std::to_string(row.seed);
    auto emit = [&](const std::string& metric, double val) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.9g\n", v.c_str(), metric.c_str(), val);
      out += buf;
    };
    emit("params", static_cast<double>(row.params));
    emit("final_nll", row.final_nll);
    emit("col_acc", row.col_acc);
    for (const auto& [wv, cons] : row.consistency_by_w) {
      std::snprintf(buf, sizeof(buf), "consistency_w%g", wv);
      emit(buf, cons);
    }
  }
  return out;
}

// --- scaling miniature ----------------------------------------------------

ScalingResult scaling_study(const Dataset& data, const ModelConfig& small_cfg,
                            const ModelConfig& big_cfg, const TrainConfig& budget,
                            const std::vector<uint64_t>& seeds) {
  check(!seeds.empty(), "scaling: need at least one seed");
  check(big_cfg.embed_dim > small_cfg.embed_dim, "scaling: big model must be wider");
  ScalingResult res;
  for (uint64_t seed : seeds) {
    for (int which : {0, 1}) {
      const ModelConfig& mc = which == 0 ? small_cfg : big_cfg;
      TrainConfig tc = budget;
      tc.seed = seed;
      Rng irng(seed, 4242);
      auto w = init_model<float>(mc, irng);
      auto opt = init_optim(w);
      auto tr = train(w, opt, data, tc);
      (which == 0 ? res.nll_small : res.nll_big).push_back(tr.final_nll);
    }
  }
  res.median_small = median(res.nll_small);
  res.median_big = median(res.nll_big);
  return res;
}

}  // namespace aim
