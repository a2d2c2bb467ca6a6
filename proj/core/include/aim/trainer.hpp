#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aim/model.hpp"
#include "aim/tokenizer.hpp"

namespace aim {

struct TrainConfig {
  int batch_size = 64;
  double base_lr_per_256 = 1e-4;  // scaled linearly with batch size
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  double class_dropout = 0.1;
  int steps = 1000;
  int warmup_steps = 100;  // linear warmup, then constant
  uint64_t seed = 0;
  double grad_clip = 0.0;    // global-norm clip; 0 disables
  int checkpoint_every = 0;  // extra periodic checkpoints; 0 keeps only the final one
  std::string out_dir;       // empty: no files, metrics kept in memory

  void validate() const;
};

// Linear batch-size scaling rule for the base learning rate.
double effective_lr(const TrainConfig& cfg);
// effective_lr with warmup applied; `step` counts completed optimizer steps.
double scheduled_lr(const TrainConfig& cfg, int64_t step);

struct OptimState {
  int64_t step = 0;                 // completed optimizer steps
  std::vector<Tensor<float>> m;     // aligned with ModelWeights::params()
  std::vector<Tensor<float>> v;
};

OptimState init_optim(ModelWeights<float>& w);

// Decoupled weight decay skips biases and gains (rank < 2), every embedding
// table, the conditioning bias table, and the state-transition log parameters.
bool decay_exempt(const std::string& name, int rank);

// One bias-corrected AdamW update of a single tensor; `t` is the 1-based step
// count and `g` may be empty (treated as an all-zero gradient).
void adamw_update(Tensor<float>& p, const std::vector<float>& g, Tensor<float>& m,
                  Tensor<float>& v, int64_t t, double lr, double beta1, double beta2, double eps,
                  double wd);

void adamw_step(ModelWeights<float>& w, OptimState& opt, const TrainConfig& cfg, double lr);

struct TrainResult {
  std::vector<double> losses;  // mean batch NLL per step
  std::string metrics;         // one "step\tloss\tlr" line per step
  double final_nll = 0.0;      // dropout-free NLL on the dataset after the run
};

// Runs steps [opt.step, cfg.steps); resuming from a loaded checkpoint continues
// bit-identically because every random choice is derived from (seed, step) or
// (seed, epoch), never from carried rng state.
TrainResult train(ModelWeights<float>& w, OptimState& opt, const Dataset& data,
                  const TrainConfig& cfg);

// Mean NLL over (up to max_records of) the dataset under the true class labels.
double dataset_nll(ModelWeights<float>& w, const Dataset& data, size_t max_records = 0);

using ConfigKv = std::vector<std::pair<std::string, std::string>>;

void save_checkpoint(const std::string& path, ModelWeights<float>& w, const OptimState& opt,
                     const ConfigKv& extra = {});

struct Checkpoint {
  ModelConfig model;
  ModelWeights<float> weights;
  OptimState optim;
  std::map<std::string, std::string> config;  // complete key=value block
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace aim
