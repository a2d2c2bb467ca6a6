#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aim/model.hpp"
#include "aim/sampler.hpp"
#include "aim/tokenizer.hpp"
#include "aim/trainer.hpp"

namespace aim {

// --- decode scaling -------------------------------------------------------

// Minimal causal multi-head attention stack used purely as the quadratic
// contrast object for decode timing. Same d, layer count, and vocab as the
// recurrent model; raw float internals, per-stream growing KV memory.
struct AttentionBaseline {
  ModelConfig cfg;  // n_layers, embed_dim, vocab_size, n_classes, seq_len used
  int heads = 1;    // embed_dim / 64, floor, min 1
  std::vector<float> token_embed;  // [V, d]
  std::vector<float> class_embed;  // [K+1, d]
  std::vector<float> pos_embed;    // [L+1, d]
  struct Layer {
    std::vector<float> wqkv;  // [d, 3d]
    std::vector<float> wo;    // [d, d]
  };
  std::vector<Layer> layers;
  std::vector<float> head;  // [d, V]
};

AttentionBaseline make_attention_baseline(const ModelConfig& cfg, uint64_t seed);

// Per-stream decode memory: t grows, K/V rows accumulate (the contrast with
// the constant-size recurrent DecodeState).
struct AttnStream {
  int t = 0;
  std::vector<std::vector<float>> K;  // per layer, t*d floats
  std::vector<std::vector<float>> V;
};

AttnStream attn_begin(const AttentionBaseline& m);
// Feeds the class row at t=0 and token rows after, mirroring model_step.
void attn_step(const AttentionBaseline& m, AttnStream& s, int token_or_class,
               std::vector<float>& logits_out);

struct BenchPoint {
  int64_t length = 0;
  double total_ms = 0;       // median total decode wall time for the batch
  double tokens_per_sec = 0;
  double early_step_ms = 0;  // mean per-step time over the first 64 steps
  double late_step_ms = 0;   // mean per-step time over the last 64 steps
};

struct BenchReport {
  std::string kind;  // "mamba" or "attention"
  ModelConfig model;
  int batch = 16;
  int trials = 5;
  int warmup = 2;
  std::vector<BenchPoint> points;
  double slope = 0;       // log-log least-squares fit of total time vs length
  double step_ratio = 0;  // late/early per-step time at the longest length
  size_t state_bytes = 0; // per-stream decode-state footprint at max length
};

double fit_loglog_slope(const std::vector<int64_t>& lengths, const std::vector<double>& times);

// Times a full greedy decode of `length` tokens for `batch` independent
// streams advanced in lockstep; the fed tokens are a fixed seeded sequence so
// both kinds execute the identical harness.
BenchReport decode_scaling_bench(const std::string& kind, const ModelConfig& cfg,
                                 const std::vector<int64_t>& lengths, int batch = 16,
                                 int trials = 5, int warmup = 2, uint64_t seed = 0);

std::string bench_report_text(const BenchReport& r);
std::string bench_report_csv(const BenchReport& r);
std::string bench_report_dat(const BenchReport& r);
// Writes <prefix>.txt, <prefix>.csv, <prefix>.dat.
void write_bench_report(const BenchReport& r, const std::string& prefix);

// --- structure metrics ----------------------------------------------------

// Fraction of cells whose token, with the fine-luminance bit cleared, equals
// the palette entry its column dictates. Only the column-determined ramp
// classes (0 and 2) are meaningful inputs.
double column_accuracy(const std::vector<TokenGrid>& grids, const SyntheticSpec& spec,
                       int class_id);

struct NllReport {
  double nll = 0;       // nats per token
  int64_t tokens = 0;
  size_t records = 0;
};

// Mean NLL over records [begin, end) of the dataset under true class labels.
NllReport nll_eval(ModelWeights<float>& w, const Dataset& data, size_t begin, size_t end);

// Nearest-centroid classifier over token histograms.
struct CentroidClassifier {
  int n_classes = 0;
  int vocab = 0;
  std::vector<double> centroids;  // [n_classes, vocab], rows sum to 1
};

CentroidClassifier fit_centroid_classifier(const Dataset& train);
int classify(const CentroidClassifier& c, const std::vector<uint16_t>& tokens);

// Fraction of generated samples whose classified label matches the requested
// class, averaged over all classes.
double class_consistency(ModelWeights<float>& w, const CentroidClassifier& c,
                         const GuidanceConfig& g, int per_class, uint64_t seed);

// --- ablation suite -------------------------------------------------------

struct AblationConfig {
  ModelConfig base;   // pe/n_groups overridden per variant
  TrainConfig train;  // identical budget for every variant
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<int> groups = {1, 2, 4};
  std::vector<double> cfg_w = {0.0, 1.0, 1.5, 2.0};
  int samples_per_class = 8;
};

struct AblationRow {
  std::string variant;  // e.g. "pe-learned/G2"
  PeKind pe = PeKind::kLearned;
  int groups = 1;
  uint64_t seed = 0;
  int64_t params = 0;
  double final_nll = 0;
  double col_acc = 0;  // mean over ramp classes 0 and 2 of generated grids
  std::map<double, double> consistency_by_w;
};

struct AblationResult {
  AblationConfig cfg;
  std::vector<AblationRow> rows;  // one per (variant, seed)
};

AblationResult ablation_suite(const Dataset& data, const AblationConfig& acfg);

std::string ablation_text(const AblationResult& r);
std::string ablation_csv(const AblationResult& r);

// Median of per-seed values for one variant/metric; helper for acceptance
// checks and report summaries.
double median(std::vector<double> xs);

// --- scaling miniature ----------------------------------------------------

struct ScalingResult {
  std::vector<double> nll_small, nll_big;  // per seed
  double median_small = 0, median_big = 0;
};

ScalingResult scaling_study(const Dataset& data, const ModelConfig& small_cfg,
                            const ModelConfig& big_cfg, const TrainConfig& budget,
                            const std::vector<uint64_t>& seeds);

}  // namespace aim
