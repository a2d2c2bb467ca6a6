#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aim/bench.hpp"
#include "aim/config_file.hpp"
#include "aim/sampler.hpp"
#include "aim/trainer.hpp"

namespace aim {
namespace {

// ---- config-file plumbing --------------------------------------------------

int64_t parse_i64(const std::string& key, const std::string& v) {
  size_t used = 0;
  int64_t x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (...) {
    used = 0;
  }
  check(used == v.size() && !v.empty(),
        "key '" + key + "': '" + v + "' is not an integer");
  return x;
}

double parse_f64(const std::string& key, const std::string& v) {
  size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (...) {
    used = 0;
  }
  check(used == v.size() && !v.empty(),
        "key '" + key + "': '" + v + "' is not a number");
  return x;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error("key '" + key + "': '" + v + "' is not a boolean (use true/false)");
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t comma = v.find(',', start);
    out.push_back(v.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// One settable knob: a run-config key and the CLI flag bound to the same
// value. Defaults < config file < explicit flags.
struct Knob {
  std::string key;
  std::string flag;
  std::function<void(const std::string&)> set;
};

struct KnobSet {
  CLI::App* cmd = nullptr;
  std::string config_path;
  std::vector<Knob> knobs;

  explicit KnobSet(CLI::App* c) : cmd(c) {
    cmd->add_option("--config", config_path, "key=value run config file; explicit flags win");
  }

  std::string tag(const std::string& key, const std::string& help) {
    return help + " [" + key + "]";
  }

  template <typename T>
  void num(const std::string& flag, const std::string& key, T& ref, const std::string& help) {
    cmd->add_option(flag, ref, tag(key, help))->capture_default_str();
    knobs.push_back({key, flag, [key, &ref](const std::string& v) {
                       if constexpr (std::is_floating_point_v<T>)
                         ref = static_cast<T>(parse_f64(key, v));
                       else
                         ref = static_cast<T>(parse_i64(key, v));
                     }});
  }

  void boolean(const std::string& flag, const std::string& key, bool& ref, const std::string& help) {
    cmd->add_flag(flag + ",!--no-" + flag.substr(2), ref, tag(key, help));
    knobs.push_back({key, flag, [key, &ref](const std::string& v) { ref = parse_flag(key, v); }});
  }

  void str(const std::string& flag, const std::string& key, std::string& ref,
           const std::string& help) {
    cmd->add_option(flag, ref, tag(key, help))->capture_default_str();
    knobs.push_back({key, flag, [&ref](const std::string& v) { ref = v; }});
  }

  template <typename T>
  void num_list(const std::string& flag, const std::string& key, std::vector<T>& ref,
                const std::string& help) {
    cmd->add_option(flag, ref, tag(key, help))->delimiter(',');
    knobs.push_back({key, flag, [key, &ref](const std::string& v) {
                       ref.clear();
                       for (const auto& s : split_commas(v)) {
                         if constexpr (std::is_floating_point_v<T>)
                           ref.push_back(static_cast<T>(parse_f64(key, s)));
                         else
                           ref.push_back(static_cast<T>(parse_i64(key, s)));
                       }
                     }});
  }

  // Applies the config file (if any) and reports every key that was set
  // explicitly, by either the file or a flag.
  std::set<std::string> merge() {
    std::set<std::string> touched;
    if (!config_path.empty()) {
      for (const auto& e : read_config_file(config_path)) {
        auto it = std::find_if(knobs.begin(), knobs.end(),
                               [&](const Knob& k) { return k.key == e.key; });
        check(it != knobs.end(), "config: line " + std::to_string(e.line) +
                                     ": unknown key '" + e.key + "'");
        touched.insert(e.key);
        if (cmd->count(it->flag) > 0) continue;
        try {
          it->set(e.value);
        } catch (const Error& err) {
          throw Error("config: line " + std::to_string(e.line) + ": " + err.what());
        }
      }
    }
    for (const auto& k : knobs)
      if (cmd->count(k.flag) > 0) touched.insert(k.key);
    return touched;
  }
};

// Must render exactly like the checkpoint writer so resume conflict checks
// can compare strings.
std::vector<std::pair<std::string, std::string>> model_kv(const ModelConfig& c) {
  return {
      {"model.n_layers", std::to_string(c.n_layers)},
      {"model.embed_dim", std::to_string(c.embed_dim)},
      {"model.n_groups", std::to_string(c.n_groups)},
      {"model.vocab_size", std::to_string(c.vocab_size)},
      {"model.n_classes", std::to_string(c.n_classes)},
      {"model.seq_len", std::to_string(c.seq_len)},
      {"model.state_dim", std::to_string(c.state_dim)},
      {"model.expand", std::to_string(c.expand)},
      {"model.conv_kernel", std::to_string(c.conv_kernel)},
      {"model.dt_rank", std::to_string(c.dt_rank)},
      {"model.pe", pe_kind_name(c.pe)},
      {"model.tie_head", std::to_string(c.tie_head ? 1 : 0)},
      {"model.parallel_scan", std::to_string(c.parallel_scan ? 1 : 0)},
      {"model.scan_block", std::to_string(c.scan_block)},
  };
}

void add_model_knobs(KnobSet& ks, ModelConfig& mc, std::string& pe_str) {
  pe_str = pe_kind_name(mc.pe);
  ks.num("--n-layers", "model.n_layers", mc.n_layers, "residual block count");
  ks.num("--embed-dim", "model.embed_dim", mc.embed_dim, "model width d");
  ks.num("--n-groups", "model.n_groups", mc.n_groups, "adaLN parameter groups");
  ks.num("--vocab-size", "model.vocab_size", mc.vocab_size, "token vocabulary size (auto from data if unset)");
  ks.num("--n-classes", "model.n_classes", mc.n_classes,
         "condition classes, a null class is appended (auto from data if unset)");
  ks.num("--seq-len", "model.seq_len", mc.seq_len,
         "image tokens per sequence (auto from data or bench lengths if unset)");
  ks.num("--state-dim", "model.state_dim", mc.state_dim, "SSM state size per channel");
  ks.num("--expand", "model.expand", mc.expand, "inner width multiplier");
  ks.num("--conv-kernel", "model.conv_kernel", mc.conv_kernel, "depthwise conv width");
  ks.num("--dt-rank", "model.dt_rank", mc.dt_rank, "dt projection rank (0 = width/16)");
  ks.str("--pe", "model.pe", pe_str, "positional encoding: learned|sinusoidal|none");
  ks.boolean("--tie-head", "model.tie_head", mc.tie_head, "tie the output head to the token embedding");
  ks.boolean("--parallel-scan", "model.parallel_scan", mc.parallel_scan, "blocked two-sweep scan");
  ks.num("--scan-block", "model.scan_block", mc.scan_block, "parallel scan block length");
}

void add_train_knobs(KnobSet& ks, TrainConfig& tc) {
  ks.num("--batch-size", "train.batch_size", tc.batch_size, "sequences per optimizer step");
  ks.num("--base-lr", "train.base_lr_per_256", tc.base_lr_per_256, "learning rate per 256 batch rows");
  ks.num("--beta1", "train.beta1", tc.beta1, "AdamW beta1");
  ks.num("--beta2", "train.beta2", tc.beta2, "AdamW beta2");
  ks.num("--eps", "train.eps", tc.eps, "AdamW epsilon");
  ks.num("--weight-decay", "train.weight_decay", tc.weight_decay, "decoupled weight decay");
  ks.num("--class-dropout", "train.class_dropout", tc.class_dropout, "null-class substitution rate");
  ks.num("--steps", "train.steps", tc.steps, "optimizer steps to reach");
  ks.num("--warmup-steps", "train.warmup_steps", tc.warmup_steps, "linear warmup steps");
  ks.num("--seed", "train.seed", tc.seed, "training seed (init, shuffle, dropout)");
  ks.num("--grad-clip", "train.grad_clip", tc.grad_clip, "global grad-norm cap (0 = off)");
  ks.num("--checkpoint-every", "train.checkpoint_every", tc.checkpoint_every,
         "periodic checkpoint interval (0 = final only)");
  ks.str("--out-dir", "train.out_dir", tc.out_dir, "checkpoint and metrics directory");
}

std::string shape_str(const Tensor<float>& t) {
  std::string s = "[";
  for (int i = 0; i < t.rank(); ++i) s += (i ? "," : "") + std::to_string(t.dim(i));
  return s + "]";
}

// ---- subcommands -----------------------------------------------------------

struct DatasetCmd {
  KnobSet ks;
  SyntheticSpec spec;
  int per_class = 100;
  uint64_t seed = 0;
  std::string out;

  explicit DatasetCmd(CLI::App* c) : ks(c) {
    ks.num("--classes", "dataset.classes", spec.n_classes, "class count");
    ks.num("--image-h", "dataset.image_h", spec.image_h, "image height in pixels");
    ks.num("--image-w", "dataset.image_w", spec.image_w, "image width in pixels");
    ks.num("--patch", "dataset.patch", spec.patch, "patch edge in pixels");
    ks.num("--noise", "dataset.noise", spec.noise, "uniform pixel jitter");
    ks.num("--per-class", "dataset.per_class", per_class, "records per class");
    ks.num("--seed", "dataset.seed", seed, "generator seed");
    ks.str("--out", "dataset.out", out, "output dataset path");
  }

  void run() {
    ks.merge();
    check(!out.empty(), "dataset: --out is required");
    spec.validate();
    Dataset ds = build_dataset(spec, per_class, seed);
    write_dataset(out, ds);
    const auto bytes = std::filesystem::file_size(out);
    std::printf("wrote %zu records (%d classes x %d, %dx%d px, %d tokens each) to %s (%s)\n",
                ds.records.size(), spec.n_classes, per_class, spec.image_h, spec.image_w,
                spec.seq_len(), out.c_str(), human_bytes(bytes).c_str());
  }
};

struct TrainCmd {
  KnobSet ks;
  ModelConfig mc;
  std::string pe_str;
  TrainConfig tc;
  std::string data_path, resume;

  explicit TrainCmd(CLI::App* c) : ks(c) {
    add_model_knobs(ks, mc, pe_str);
    add_train_knobs(ks, tc);
    ks.str("--data", "train.data", data_path, "training dataset path");
    ks.str("--resume", "train.resume", resume, "checkpoint to resume from");
  }

  void run() {
    const auto touched = ks.merge();
    mc.pe = pe_kind_from(pe_str);
    check(!data_path.empty(), "train: --data is required");
    Dataset data = read_dataset(data_path);
    if (!touched.count("model.seq_len")) mc.seq_len = data.spec.seq_len();
    if (!touched.count("model.vocab_size")) mc.vocab_size = data.spec.vocab();
    if (!touched.count("model.n_classes")) mc.n_classes = data.spec.n_classes;

    ModelWeights<float> w;
    OptimState opt;
    if (!resume.empty()) {
      Checkpoint ck = load_checkpoint(resume);
      for (const auto& [key, value] : model_kv(mc)) {
        if (!touched.count(key)) continue;
        const std::string& have = ck.config.at(key);
        check(value == have, "train: checkpoint/config mismatch for '" + key +
                                 "' (checkpoint " + have + ", requested " + value + ")");
      }
      // Untouched train.seed/steps/batch_size follow the checkpoint so a bare
      // --resume reproduces the interrupted run.
      auto adopt = [&](const char* key, auto& ref) {
        auto it = ck.config.find(key);
        if (!touched.count(key) && it != ck.config.end())
          ref = static_cast<std::decay_t<decltype(ref)>>(parse_i64(key, it->second));
      };
      adopt("train.seed", tc.seed);
      adopt("train.steps", tc.steps);
      adopt("train.batch_size", tc.batch_size);
      mc = ck.model;
      w = std::move(ck.weights);
      opt = std::move(ck.optim);
      std::printf("resumed %s at step %lld\n", resume.c_str(),
                  static_cast<long long>(opt.step));
    } else {
      mc.validate();
      Rng init_rng(tc.seed, 0);
      w = init_model<float>(mc, init_rng);
      opt = init_optim(w);
    }

    tc.validate();
    const int64_t start = opt.step;
    TrainResult res = train(w, opt, data, tc);
    const int64_t ran = opt.step - start;
    std::printf("trained %lld step%s to step %lld (%lld params, lr %.3g)\n",
                static_cast<long long>(ran), ran == 1 ? "" : "s",
                static_cast<long long>(opt.step), static_cast<long long>(param_count(mc)),
                effective_lr(tc));
    if (!res.losses.empty())
      std::printf("last step loss %.6f\n", res.losses.back());
    std::printf("train-set nll %.6f nats/token\n", res.final_nll);
    if (!tc.out_dir.empty())
      std::printf("checkpoints and metrics.tsv in %s\n", tc.out_dir.c_str());
  }
};

struct SampleCmd {
  KnobSet ks;
  std::string ckpt, out_dir = "samples";
  int class_id = 0, n = 8;
  GuidanceConfig g;
  uint64_t seed = 0;

  explicit SampleCmd(CLI::App* c) : ks(c) {
    ks.str("--ckpt", "sample.ckpt", ckpt, "checkpoint path");
    ks.num("--class", "sample.class", class_id, "class id to condition on");
    ks.num("--n", "sample.n", n, "samples to draw");
    ks.num("--w", "sample.w", g.w, "guidance scale (1 = no guidance)");
    ks.num("--temperature", "sample.temperature", g.temperature, "softmax temperature");
    ks.num("--top-k", "sample.top_k", g.top_k, "top-k cutoff (0 = off)");
    ks.num("--top-p", "sample.top_p", g.top_p, "nucleus cutoff (0 = off)");
    ks.boolean("--argmax", "sample.argmax", g.argmax, "greedy decoding");
    ks.boolean("--prob-space", "sample.prob_space", g.prob_space,
               "mix probabilities instead of logits (w <= 1)");
    ks.num("--seed", "sample.seed", seed, "sampling seed");
    ks.str("--out-dir", "sample.out_dir", out_dir, "output directory");
  }

  void run() {
    ks.merge();
    check(!ckpt.empty(), "sample: --ckpt is required");
    check(n >= 1, "sample: --n must be >= 1");
    g.validate();
    Checkpoint ck = load_checkpoint(ckpt);
    check(class_id >= 0 && class_id < ck.model.n_classes,
          "sample: class id " + std::to_string(class_id) + " out of range [0, " +
              std::to_string(ck.model.n_classes) + ")");
    check(ck.model.vocab_size == 64,
          "sample: PPM decode needs the 64-entry palette, checkpoint has vocab_size " +
              std::to_string(ck.model.vocab_size));

    // Grid geometry rides in the checkpoint; square fallback for hand-made ones.
    int gh = 0, gw = 0, patch = 2;
    if (ck.config.count("dataset.image_h")) {
      patch = static_cast<int>(parse_i64("dataset.patch", ck.config.at("dataset.patch")));
      gh = static_cast<int>(parse_i64("dataset.image_h", ck.config.at("dataset.image_h"))) / patch;
      gw = static_cast<int>(parse_i64("dataset.image_w", ck.config.at("dataset.image_w"))) / patch;
    } else {
      while ((gh + 1) * (gh + 1) <= ck.model.seq_len) ++gh;
      gw = gh;
    }
    check(gh * gw == ck.model.seq_len,
          "sample: cannot lay out " + std::to_string(ck.model.seq_len) + " tokens as a " +
              std::to_string(gh) + "x" + std::to_string(gw) + " grid");

    auto tokens = generate(ck.weights, class_id, n, g, seed);
    std::filesystem::create_directories(out_dir);
    const Codebook cb = make_codebook(patch);
    for (int i = 0; i < n; ++i) {
      const TokenGrid grid = unflatten(tokens[static_cast<size_t>(i)], gh, gw);
      const std::string base =
          out_dir + "/class" + std::to_string(class_id) + "_" + std::to_string(i);
      write_ppm(base + ".ppm", decode(grid, cb));
      std::ofstream tf(base + ".tokens");
      check(static_cast<bool>(tf), "sample: cannot write " + base + ".tokens");
      for (int r = 0; r < gh; ++r) {
        for (int col = 0; col < gw; ++col)
          tf << (col ? " " : "") << grid.tokens[static_cast<size_t>(r * gw + col)];
        tf << "\n";
      }
    }
    std::printf("wrote %d sample%s for class %d%s%s%s to %s (w=%g, seed=%llu)\n", n,
                n == 1 ? "" : "s", class_id, class_id < 10 ? " (" : "",
                class_id < 10 ? class_name(class_id) : "", class_id < 10 ? ")" : "",
                out_dir.c_str(), g.w, static_cast<unsigned long long>(seed));
  }
};

struct EvalCmd {
  KnobSet ks;
  std::string ckpt, data_path, split = "eval";
  int holdout = 5, per_class = 8;
  double w = 1.0;
  uint64_t seed = 0;

  explicit EvalCmd(CLI::App* c) : ks(c) {
    ks.str("--ckpt", "eval.ckpt", ckpt, "checkpoint path");
    ks.str("--data", "eval.data", data_path, "dataset path");
    ks.str("--split", "eval.split", split, "nll split: all|train|eval");
    ks.num("--holdout", "eval.holdout", holdout, "every k-th record is held out for eval");
    ks.num("--per-class", "eval.per_class", per_class, "generated samples per class for consistency");
    ks.num("--w", "eval.w", w, "guidance scale for generated samples");
    ks.num("--seed", "eval.seed", seed, "generation seed");
  }

  void run() {
    ks.merge();
    check(!ckpt.empty(), "eval: --ckpt is required");
    check(!data_path.empty(), "eval: --data is required");
    check(holdout >= 2, "eval: --holdout must be >= 2");
    check(split == "all" || split == "train" || split == "eval",
          "eval: --split must be all, train, or eval");
    check(per_class >= 1, "eval: --per-class must be >= 1");
    Checkpoint ck = load_checkpoint(ckpt);
    Dataset full = read_dataset(data_path);

    Dataset train_set = full, eval_set = full;
    train_set.records.clear();
    eval_set.records.clear();
    for (size_t i = 0; i < full.records.size(); ++i) {
      auto& dst = (i % static_cast<size_t>(holdout) == static_cast<size_t>(holdout) - 1)
                      ? eval_set
                      : train_set;
      dst.records.push_back(full.records[i]);
    }
    const Dataset& nll_set = split == "all" ? full : (split == "train" ? train_set : eval_set);
    check(!nll_set.records.empty(), "eval: split '" + split + "' is empty");

    NllReport rep = nll_eval(ck.weights, nll_set, 0, nll_set.records.size());
    std::printf("nll (%s split): %.6f nats/token over %zu records (%lld tokens)\n",
                split.c_str(), rep.nll, rep.records, static_cast<long long>(rep.tokens));

    CentroidClassifier clf = fit_centroid_classifier(train_set);
    GuidanceConfig g;
    g.w = w;
    g.validate();
    const double consistency = class_consistency(ck.weights, clf, g, per_class, seed);
    std::printf("class consistency @ w=%g: %.4f (%d per class, centroid classifier)\n", w,
                consistency, per_class);
  }
};

struct BenchCmd {
  KnobSet ks;
  ModelConfig mc;
  std::string pe_str;
  TrainConfig tc;
  std::string kind = "mamba", out, data_path;
  std::vector<int64_t> lengths = {64, 128, 256, 512, 1024, 2048};
  int batch = 16, trials = 5, warmup = 2, per_class = 8;
  uint64_t seed = 0;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<int> groups = {1, 2, 4};
  std::vector<double> w_list = {0.0, 1.0, 1.5, 2.0};
  int d_small = 64, d_big = 128;

  explicit BenchCmd(CLI::App* c) : ks(c) {
    mc.n_layers = 4;  // divisible by the default ablation group counts
    tc.batch_size = 16;
    tc.steps = 300;
    tc.warmup_steps = 30;
    ks.str("--kind", "bench.kind", kind, "mamba|attention|ablation|scaling");
    ks.str("--out", "bench.out", out, "report file prefix (empty = stdout only)");
    ks.str("--data", "bench.data", data_path, "dataset path (ablation and scaling)");
    ks.num_list("--lengths", "bench.lengths", lengths, "decode lengths, comma separated");
    ks.num("--batch", "bench.batch", batch, "parallel decode streams");
    ks.num("--trials", "bench.trials", trials, "timed repetitions per length");
    ks.num("--warmup", "bench.warmup", warmup, "discarded warmup repetitions");
    ks.num("--seed", "bench.seed", seed, "weight-init seed for decode timing");
    ks.num_list("--seeds", "bench.seeds", seeds, "training seeds (ablation and scaling)");
    ks.num_list("--groups", "bench.groups", groups, "adaLN group counts to ablate");
    ks.num_list("--w-list", "bench.w_list", w_list, "guidance scales for consistency");
    ks.num("--per-class", "bench.per_class", per_class, "generated samples per class");
    ks.num("--d-small", "bench.d_small", d_small, "small model width (scaling)");
    ks.num("--d-big", "bench.d_big", d_big, "big model width (scaling)");
    add_model_knobs(ks, mc, pe_str);
    // Training budget for ablation/scaling; per-run seeds come from --seeds.
    ks.num("--train-batch", "train.batch_size", tc.batch_size, "sequences per optimizer step");
    ks.num("--base-lr", "train.base_lr_per_256", tc.base_lr_per_256, "learning rate per 256 batch rows");
    ks.num("--steps", "train.steps", tc.steps, "optimizer steps per run");
    ks.num("--warmup-steps", "train.warmup_steps", tc.warmup_steps, "linear warmup steps");
    ks.num("--weight-decay", "train.weight_decay", tc.weight_decay, "decoupled weight decay");
    ks.num("--class-dropout", "train.class_dropout", tc.class_dropout, "null-class substitution rate");
    ks.num("--grad-clip", "train.grad_clip", tc.grad_clip, "global grad-norm cap (0 = off)");
  }

  void run() {
    const auto touched = ks.merge();
    mc.pe = pe_kind_from(pe_str);

    if (kind == "mamba" || kind == "attention") {
      check(!lengths.empty(), "bench: --lengths must not be empty");
      if (!touched.count("model.seq_len"))
        mc.seq_len = static_cast<int>(*std::max_element(lengths.begin(), lengths.end()));
      BenchReport r = decode_scaling_bench(kind, mc, lengths, batch, trials, warmup, seed);
      std::fputs(bench_report_text(r).c_str(), stdout);
      if (!out.empty()) {
        write_bench_report(r, out);
        std::printf("reports: %s.txt %s.csv %s.dat\n", out.c_str(), out.c_str(), out.c_str());
      }
      return;
    }

    check(!data_path.empty(), "bench: --data is required for kind '" + kind + "'");
    Dataset data = read_dataset(data_path);
    if (!touched.count("model.seq_len")) mc.seq_len = data.spec.seq_len();
    if (!touched.count("model.vocab_size")) mc.vocab_size = data.spec.vocab();
    if (!touched.count("model.n_classes")) mc.n_classes = data.spec.n_classes;

    if (kind == "ablation") {
      AblationConfig acfg;
      acfg.base = mc;
      acfg.train = tc;
      acfg.seeds = seeds;
      acfg.groups = groups;
      acfg.cfg_w = w_list;
      acfg.samples_per_class = per_class;
      AblationResult res = ablation_suite(data, acfg);
      std::fputs(ablation_text(res).c_str(), stdout);
      if (!out.empty()) {
        std::ofstream(out + ".txt") << ablation_text(res);
        std::ofstream(out + ".csv") << ablation_csv(res);
        std::printf("reports: %s.txt %s.csv\n", out.c_str(), out.c_str());
      }
      return;
    }

    if (kind == "scaling") {
      ModelConfig small_cfg = mc, big_cfg = mc;
      small_cfg.embed_dim = d_small;
      big_cfg.embed_dim = d_big;
      ScalingResult res = scaling_study(data, small_cfg, big_cfg, tc, seeds);
      std::string text;
      for (size_t i = 0; i < res.nll_small.size(); ++i) {
        char line[128];
        std::snprintf(line, sizeof(line), "seed %llu: nll d=%d %.6f | d=%d %.6f\n",
                      static_cast<unsigned long long>(seeds[i]), d_small, res.nll_small[i],
                      d_big, res.nll_big[i]);
        text += line;
      }
      char tail[128];
      std::snprintf(tail, sizeof(tail), "median: d=%d %.6f | d=%d %.6f (gap %.6f)\n", d_small,
                    res.median_small, d_big, res.median_big,
                    res.median_small - res.median_big);
      text += tail;
      std::fputs(text.c_str(), stdout);
      if (!out.empty()) {
        std::ofstream(out + ".txt") << text;
        std::printf("report: %s.txt\n", out.c_str());
      }
      return;
    }

    throw Error("bench: unknown kind '" + kind + "' (expected mamba|attention|ablation|scaling)");
  }
};

struct InspectCmd {
  KnobSet ks;
  std::string ckpt;

  explicit InspectCmd(CLI::App* c) : ks(c) {
    ks.str("--ckpt", "inspect.ckpt", ckpt, "checkpoint path");
  }

  void run() {
    ks.merge();
    check(!ckpt.empty(), "inspect: --ckpt is required");
    Checkpoint ck = load_checkpoint(ckpt);
    std::printf("checkpoint: %s\n", ckpt.c_str());
    std::printf("config:\n");
    for (const auto& [key, value] : ck.config)
      std::printf("  %s = %s\n", key.c_str(), value.c_str());
    std::printf("tensors:\n");
    int64_t total = 0;
    for (auto& [name, p] : ck.weights.params()) {
      std::printf("  %-24s %-14s %lld\n", name.c_str(), shape_str(*p).c_str(),
                  static_cast<long long>(p->numel()));
      total += p->numel();
    }
    const int64_t expected = param_count(ck.model);
    std::printf("parameters: %lld (param_count: %lld, %s)\n", static_cast<long long>(total),
                static_cast<long long>(expected), total == expected ? "match" : "MISMATCH");
    std::printf("weight payload: %s; optimizer adds 2x at step %lld\n",
                human_bytes(static_cast<uint64_t>(total) * 4).c_str(),
                static_cast<long long>(ck.optim.step));
  }
};

}  // namespace
}  // namespace aim

int main(int argc, char** argv) {
  using namespace aim;
  CLI::App app{"class-conditional image-token generation on a selective state-space backbone"};
  app.require_subcommand(1);

  int threads = 1;
  if (const char* env = std::getenv("AIM_THREADS")) threads = std::atoi(env);
  app.add_option("--threads", threads, "global worker cap (default: AIM_THREADS or 1)")
      ->capture_default_str();

  auto* cd = app.add_subcommand("dataset", "generate a synthetic token dataset");
  auto* ct = app.add_subcommand("train", "train a model on a dataset");
  auto* cs = app.add_subcommand("sample", "decode images from a checkpoint");
  auto* ce = app.add_subcommand("eval", "nll and class-consistency report");
  auto* cb = app.add_subcommand("bench", "decode scaling, ablations, width scaling");
  auto* ci = app.add_subcommand("inspect", "print checkpoint config and tensor census");
  for (auto* c : {cd, ct, cs, ce, cb, ci}) c->fallthrough();

  DatasetCmd dataset_cmd(cd);
  TrainCmd train_cmd(ct);
  SampleCmd sample_cmd(cs);
  EvalCmd eval_cmd(ce);
  BenchCmd bench_cmd(cb);
  InspectCmd inspect_cmd(ci);

  CLI11_PARSE(app, argc, argv);

  try {
    check(threads >= 1, "--threads must be >= 1");
    set_max_threads(threads);
    if (cd->parsed()) dataset_cmd.run();
    if (ct->parsed()) train_cmd.run();
    if (cs->parsed()) sample_cmd.run();
    if (ce->parsed()) eval_cmd.run();
    if (cb->parsed()) bench_cmd.run();
    if (ci->parsed()) inspect_cmd.run();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
