#include "aim/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aim/serial.hpp"

namespace aim {

namespace {

constexpr uint32_t kCheckpointVersion = 1;
constexpr uint64_t kEpochStream = 1000000000ull;
constexpr uint64_t kStepStream = 2000000000ull;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

TokenSequence to_sequence(const DatasetRecord& rec) {
  TokenSequence seq;
  seq.class_id = rec.class_id;
  seq.tokens.assign(rec.tokens.begin(), rec.tokens.end());
  return seq;
}

void check_compat(const ModelConfig& mc, const Dataset& data) {
  check(data.spec.seq_len() == mc.seq_len, "train: dataset seq_len " +
                                               std::to_string(data.spec.seq_len()) +
                                               " != model seq_len " + std::to_string(mc.seq_len));
  check(data.spec.vocab() == mc.vocab_size, "train: dataset vocab != model vocab");
  check(data.spec.n_classes <= mc.n_classes, "train: dataset has more classes than the model");
}

}  // namespace

void TrainConfig::validate() const {
  check(batch_size >= 1, "train: batch_size must be >= 1");
  check(base_lr_per_256 > 0.0, "train: base_lr_per_256 must be positive");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
        "train: betas must lie in [0,1)");
  check(eps > 0.0, "train: eps must be positive");
  check(weight_decay >= 0.0, "train: weight_decay must be >= 0");
  check(class_dropout >= 0.0 && class_dropout <= 1.0, "train: class_dropout must be in [0,1]");
  check(steps >= 0, "train: steps must be >= 0");
  check(warmup_steps >= 0, "train: warmup_steps must be >= 0");
  check(grad_clip >= 0.0, "train: grad_clip must be >= 0");
  check(checkpoint_every >= 0, "train: checkpoint_every must be >= 0");
}

double effective_lr(const TrainConfig& cfg) {
  check(cfg.batch_size >= 1, "train: batch_size must be >= 1");
  return cfg.base_lr_per_256 * static_cast<double>(cfg.batch_size) / 256.0;
}

double scheduled_lr(const TrainConfig& cfg, int64_t step) {
  double lr = effective_lr(cfg);
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  return lr;
}

OptimState init_optim(ModelWeights<float>& w) {
  OptimState opt;
  for (auto& [name, p] : w.params()) {
    (void)name;
    opt.m.push_back(Tensor<float>::zeros(p->shape()));
    opt.v.push_back(Tensor<float>::zeros(p->shape()));
  }
  return opt;
}

bool decay_exempt(const std::string& name, int rank) {
  if (rank < 2) return true;
  return name.find("embed") != std::string::npos || name.find("cond.b") != std::string::npos ||
         name.find("A_log") != std::string::npos;
}

void adamw_update(Tensor<float>& p, const std::vector<float>& g, Tensor<float>& m,
                  Tensor<float>& v, int64_t t, double lr, double beta1, double beta2, double eps,
                  double wd) {
  check(t >= 1, "adamw: step count must be >= 1");
  check(m.shape() == p.shape() && v.shape() == p.shape(),
        "adamw: moment shape does not match parameter");
  check(g.empty() || static_cast<int64_t>(g.size()) == p.numel(),
        "adamw: gradient length does not match parameter");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  auto& pd = p.data();
  auto& md = m.data();
  auto& vd = v.data();
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double gi = g.empty() ? 0.0 : static_cast<double>(g[static_cast<size_t>(i)]);
    md[i] = static_cast<float>(beta1 * md[i] + (1.0 - beta1) * gi);
    vd[i] = static_cast<float>(beta2 * vd[i] + (1.0 - beta2) * gi * gi);
    const double mhat = md[i] / bc1;
    const double vhat = vd[i] / bc2;
    double upd = lr * mhat / (std::sqrt(vhat) + eps);
    if (wd > 0.0) upd += lr * wd * pd[i];
    pd[i] = static_cast<float>(pd[i] - upd);
  }
}

void adamw_step(ModelWeights<float>& w, OptimState& opt, const TrainConfig& cfg, double lr) {
  auto ps = w.params();
  check(opt.m.size() == ps.size() && opt.v.size() == ps.size(),
        "adamw: optimizer state does not match the parameter list");
  opt.step += 1;
  static const std::vector<float> kNoGrad;
  for (size_t i = 0; i < ps.size(); ++i) {
    auto& [name, p] = ps[i];
    const double wd = decay_exempt(name, p->rank()) ? 0.0 : cfg.weight_decay;
    adamw_update(*p, p->has_grad() ? p->grad() : kNoGrad, opt.m[i], opt.v[i], opt.step, lr,
                 cfg.beta1, cfg.beta2, cfg.eps, wd);
  }
}

double dataset_nll(ModelWeights<float>& w, const Dataset& data, size_t max_records) {
  NoGrad ng;
  size_t n = data.records.size();
  if (max_records > 0 && n > max_records) n = max_records;
  check(n > 0, "eval: dataset is empty");
  check_compat(w.cfg, data);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    auto seq = to_sequence(data.records[i]);
    auto logits = model_forward(seq, w, seq.class_id);
    total += static_cast<double>(nll_loss(logits, seq.tokens).item());
  }
  return total / static_cast<double>(n);
}

TrainResult train(ModelWeights<float>& w, OptimState& opt, const Dataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  w.cfg.validate();
  check_compat(w.cfg, data);
  const int64_t n = static_cast<int64_t>(data.records.size());
  check(n > 0, "train: dataset is empty");
  check(cfg.batch_size <= n, "train: batch_size exceeds dataset size");
  const int64_t per_epoch = n / cfg.batch_size;

  TrainResult res;
  std::ofstream metrics_file;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    metrics_file.open(cfg.out_dir + "/metrics.tsv", std::ios::app);
    check(static_cast<bool>(metrics_file), "train: cannot open metrics log in '" + cfg.out_dir + "'");
  }

  // Checkpoints carry the dataset geometry so a sampler can rebuild grids and
  // decode tokens without the original dataset file at hand.
  const ConfigKv extras = {
      {"dataset.classes", std::to_string(data.spec.n_classes)},
      {"dataset.image_h", std::to_string(data.spec.image_h)},
      {"dataset.image_w", std::to_string(data.spec.image_w)},
      {"dataset.patch", std::to_string(data.spec.patch)},
      {"dataset.noise", fmt_g(data.spec.noise)},
      {"train.seed", std::to_string(cfg.seed)},
      {"train.steps", std::to_string(cfg.steps)},
      {"train.batch_size", std::to_string(cfg.batch_size)},
  };

  std::vector<int64_t> order(static_cast<size_t>(n));
  int64_t shuffled_epoch = -1;
  auto ps = w.params();

  for (int64_t s = opt.step; s < cfg.steps; ++s) {
    const int64_t epoch = s / per_epoch;
    const int64_t slot = s % per_epoch;
    if (epoch != shuffled_epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng erng(cfg.seed, kEpochStream + static_cast<uint64_t>(epoch));
      for (int64_t i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(erng.uniform_int(i + 1))]);
      shuffled_epoch = epoch;
    }

    Rng srng(cfg.seed, kStepStream + static_cast<uint64_t>(s));
    for (auto& [name, p] : ps) {
      (void)name;
      p->zero_grad();
    }

    double loss_sum = 0.0;
    try {
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& rec = data.records[static_cast<size_t>(
            order[static_cast<size_t>(slot * cfg.batch_size + b)])];
        auto seq = to_sequence(rec);
        const int eff =
            apply_class_dropout(seq.class_id, srng, cfg.class_dropout, w.cfg.null_class());
        auto logits = model_forward(seq, w, eff);
        auto loss = nll_loss(logits, seq.tokens);
        loss_sum += static_cast<double>(loss.item());
        backward(scale(loss, static_cast<float>(1.0 / cfg.batch_size)));
        clear_tape<float>();
      }
    } catch (const Error& e) {
      clear_tape<float>();
      throw Error("train: step " + std::to_string(s) + ": " + e.what());
    }
    const double step_loss = loss_sum / cfg.batch_size;
    if (!std::isfinite(step_loss))
      throw Error("train: non-finite loss at step " + std::to_string(s));

    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& [name, p] : ps) {
        (void)name;
        if (!p->has_grad()) continue;
        for (float g : p->grad()) sq += static_cast<double>(g) * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) {
        const float mult = static_cast<float>(cfg.grad_clip / norm);
        for (auto& [name, p] : ps) {
          (void)name;
          if (!p->has_grad()) continue;
          for (float& g : p->grad()) g *= mult;
        }
      }
    }

    const double lr = scheduled_lr(cfg, s);
    adamw_step(w, opt, cfg, lr);

    std::string line =
        std::to_string(s) + "\t" + fmt_g(step_loss) + "\t" + fmt_g(lr) + "\n";
    res.losses.push_back(step_loss);
    res.metrics += line;
    if (metrics_file.is_open()) metrics_file << line << std::flush;

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (s + 1) % cfg.checkpoint_every == 0 && s + 1 < cfg.steps)
      save_checkpoint(cfg.out_dir + "/ckpt_" + std::to_string(s + 1) + ".aimc", w, opt, extras);
  }

  if (!cfg.out_dir.empty()) save_checkpoint(cfg.out_dir + "/ckpt_final.aimc", w, opt, extras);
  res.final_nll = dataset_nll(w, data, 512);
  return res;
}

namespace {

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  check(name.size() <= 0xffff, "checkpoint: tensor name too long");
  serial::put_u16(out, static_cast<uint16_t>(name.size()));
  out += name;
  out.push_back(static_cast<char>(t.rank()));
  for (int a = 0; a < t.rank(); ++a) serial::put_u32(out, static_cast<uint32_t>(t.dim(a)));
  for (float v : t.data()) serial::put_f32(out, v);
}

std::pair<std::string, Tensor<float>> get_tensor(serial::ByteReader& r) {
  std::string name = r.bytes(r.u16());
  r.need(1);
  const int rank = static_cast<uint8_t>(r.buf[r.pos++]);
  check(rank <= 8, "checkpoint: implausible tensor rank");
  Shape shape(static_cast<size_t>(rank));
  int64_t numel = 1;
  for (int a = 0; a < rank; ++a) {
    shape[static_cast<size_t>(a)] = r.u32();
    numel *= shape[static_cast<size_t>(a)];
  }
  r.need(static_cast<size_t>(numel) * 4);
  auto t = Tensor<float>::zeros(shape);
  for (int64_t i = 0; i < numel; ++i) t.data()[static_cast<size_t>(i)] = r.f32();
  return {std::move(name), std::move(t)};
}

int kv_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  check(it != kv.end(), "checkpoint: missing config key '" + key + "'");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw Error("checkpoint: bad value for config key '" + key + "'");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, ModelWeights<float>& w, const OptimState& opt,
                     const ConfigKv& extra) {
  const ModelConfig& c = w.cfg;
  std::string conf;
  conf += "model.n_layers=" + std::to_string(c.n_layers) + "\n";
  conf += "model.embed_dim=" + std::to_string(c.embed_dim) + "\n";
  conf += "model.n_groups=" + std::to_string(c.n_groups) + "\n";
  conf += "model.vocab_size=" + std::to_string(c.vocab_size) + "\n";
  conf += "model.n_classes=" + std::to_string(c.n_classes) + "\n";
  conf += "model.seq_len=" + std::to_string(c.seq_len) + "\n";
  conf += "model.state_dim=" + std::to_string(c.state_dim) + "\n";
  conf += "model.expand=" + std::to_string(c.expand) + "\n";
  conf += "model.conv_kernel=" + std::to_string(c.conv_kernel) + "\n";
  conf += "model.dt_rank=" + std::to_string(c.dt_rank) + "\n";
  conf += std::string("model.pe=") + pe_kind_name(c.pe) + "\n";
  conf += "model.tie_head=" + std::to_string(c.tie_head ? 1 : 0) + "\n";
  conf += "model.parallel_scan=" + std::to_string(c.parallel_scan ? 1 : 0) + "\n";
  conf += "model.scan_block=" + std::to_string(c.scan_block) + "\n";
  conf += "optim.step=" + std::to_string(opt.step) + "\n";
  for (const auto& [k, v] : extra) conf += k + "=" + v + "\n";

  std::string out = "AIMC";
  serial::put_u32(out, kCheckpointVersion);
  serial::put_u32(out, static_cast<uint32_t>(conf.size()));
  out += conf;

  auto ps = w.params();
  check(opt.m.size() == ps.size() && opt.v.size() == ps.size(),
        "checkpoint: optimizer state does not match the parameter list");
  serial::put_u32(out, static_cast<uint32_t>(ps.size()));
  for (auto& [name, p] : ps) put_tensor(out, name, *p);
  serial::put_u32(out, static_cast<uint32_t>(2 * ps.size()));
  for (size_t i = 0; i < ps.size(); ++i) {
    put_tensor(out, "m." + ps[i].first, opt.m[i]);
    put_tensor(out, "v." + ps[i].first, opt.v[i]);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(f), "checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  check(static_cast<bool>(f), "checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "checkpoint: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  serial::ByteReader r(buf, "checkpoint");

  check(r.bytes(4) == "AIMC", "checkpoint: bad magic (not an AIMC file)");
  check(r.u32() == kCheckpointVersion, "checkpoint: unsupported version");

  Checkpoint ck;
  std::istringstream cs(r.bytes(r.u32()));
  std::string line;
  while (std::getline(cs, line)) {
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check(eq != std::string::npos, "checkpoint: malformed config line '" + line + "'");
    ck.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  ModelConfig mc;
  mc.n_layers = kv_int(ck.config, "model.n_layers");
  mc.embed_dim = kv_int(ck.config, "model.embed_dim");
  mc.n_groups = kv_int(ck.config, "model.n_groups");
  mc.vocab_size = kv_int(ck.config, "model.vocab_size");
  mc.n_classes = kv_int(ck.config, "model.n_classes");
  mc.seq_len = kv_int(ck.config, "model.seq_len");
  mc.state_dim = kv_int(ck.config, "model.state_dim");
  mc.expand = kv_int(ck.config, "model.expand");
  mc.conv_kernel = kv_int(ck.config, "model.conv_kernel");
  mc.dt_rank = kv_int(ck.config, "model.dt_rank");
  {
    auto it = ck.config.find("model.pe");
    check(it != ck.config.end(), "checkpoint: missing config key 'model.pe'");
    mc.pe = pe_kind_from(it->second);
  }
  mc.tie_head = kv_int(ck.config, "model.tie_head") != 0;
  mc.parallel_scan = kv_int(ck.config, "model.parallel_scan") != 0;
  mc.scan_block = kv_int(ck.config, "model.scan_block");
  mc.validate();
  ck.model = mc;

  Rng init_rng(0, 0);
  ck.weights = init_model<float>(mc, init_rng);
  auto ps = ck.weights.params();

  const uint32_t n_weights = r.u32();
  check(n_weights == ps.size(), "checkpoint: tensor count does not match the model config");
  std::map<std::string, Tensor<float>> table;
  for (uint32_t i = 0; i < n_weights; ++i) {
    auto [name, t] = get_tensor(r);
    check(table.emplace(name, t).second, "checkpoint: duplicate tensor '" + name + "'");
  }
  for (auto& [name, p] : ps) {
    auto it = table.find(name);
    check(it != table.end(), "checkpoint: missing tensor '" + name + "'");
    check(it->second.shape() == p->shape(), "checkpoint: shape mismatch for tensor '" + name + "'");
    p->data() = it->second.data();
  }

  const uint32_t n_opt = r.u32();
  check(n_opt == 2 * ps.size(), "checkpoint: optimizer tensor count mismatch");
  std::map<std::string, Tensor<float>> opt_table;
  for (uint32_t i = 0; i < n_opt; ++i) {
    auto [name, t] = get_tensor(r);
    check(opt_table.emplace(name, t).second, "checkpoint: duplicate tensor '" + name + "'");
  }
  for (auto& [name, p] : ps) {
    for (const char* prefix : {"m.", "v."}) {
      auto it = opt_table.find(prefix + name);
      check(it != opt_table.end(), "checkpoint: missing tensor '" + std::string(prefix) + name + "'");
      check(it->second.shape() == p->shape(),
            "checkpoint: shape mismatch for tensor '" + std::string(prefix) + name + "'");
      (prefix[0] == 'm' ? ck.optim.m : ck.optim.v).push_back(it->second);
    }
  }
  {
    auto it = ck.config.find("optim.step");
    check(it != ck.config.end(), "checkpoint: missing config key 'optim.step'");
    try {
      ck.optim.step = std::stoll(it->second);
    } catch (const std::exception&) {
      throw Error("checkpoint: bad value for config key 'optim.step'");
    }
  }
  check(r.done(), "checkpoint: trailing bytes after the optimizer table");
  return ck;
}

}  // namespace aim
