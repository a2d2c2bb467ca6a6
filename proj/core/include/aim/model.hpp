#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aim/mamba.hpp"

namespace aim {

enum class PeKind { kLearned, kSinusoidal, kNone };

const char* pe_kind_name(PeKind k);
PeKind pe_kind_from(const std::string& name);

struct ModelConfig {
  int n_layers = 2;
  int embed_dim = 64;
  int n_groups = 1;
  int vocab_size = 64;
  int n_classes = 10;
  int seq_len = 64;  // image tokens per sequence
  int state_dim = 16;
  int expand = 2;
  int conv_kernel = 4;
  int dt_rank = 0;  // 0 = ceil(embed_dim/16)
  PeKind pe = PeKind::kLearned;
  bool tie_head = false;
  bool parallel_scan = false;
  int scan_block = 64;

  BlockConfig block() const;
  GroupSpec groups() const;
  int null_class() const { return n_classes; }
  void validate() const;
};

// published shapes, for parameter-count checks
ModelConfig aim_b_config();  // 24 layers, d=768, 24 groups
ModelConfig aim_l_config();  // 48 layers, d=1024, 4 groups

struct TokenSequence {
  int class_id = 0;
  std::vector<int64_t> tokens;  // length seq_len, values in [0, vocab)
};

template <typename T>
struct ModelWeights {
  ModelConfig cfg;
  Tensor<T> token_embed;  // [V, d]
  Tensor<T> class_embed;  // [K+1, d]; row K is the learned null class
  Tensor<T> pos_embed;    // [L+1, d]; trainable only for learned PE
  std::vector<BlockWeights<T>> layers;
  CondWeights<T> cond;
  Tensor<T> norm_weight;  // [d], gain of the final RMS norm
  Tensor<T> head;         // [d, V]; undefined when tie_head

  // stable name ordering; drives the optimizer and the checkpoint layout
  std::vector<std::pair<std::string, Tensor<T>*>> params();
};

template <typename T>
ModelWeights<T> init_model(const ModelConfig& cfg, Rng& rng);

// With probability p the class id is replaced by the null row.
int apply_class_dropout(int class_id, Rng& rng, double p, int null_class);

template <typename T>
Tensor<T> class_vector(const ModelWeights<T>& w, int effective_class);  // [d]

// Teacher-forcing layout, length L: row 0 embeds the class token, row t>=1
// embeds token q_t; row t predicts q_{t+1}. Positional row t is added per
// the pe kind.
template <typename T>
Tensor<T> embed_inputs(const TokenSequence& seq, const ModelWeights<T>& w, int effective_class);

// Final RMS norm with gain, then the output head.
template <typename T>
Tensor<T> head_logits(const ModelWeights<T>& w, const Tensor<T>& h);

template <typename T>
std::vector<Modulation<T>> regress_all(const ModelWeights<T>& w, int effective_class);

template <typename T>
Tensor<T> model_forward(const TokenSequence& seq, const ModelWeights<T>& w, int effective_class);

// mean over positions of -log softmax(logits)[target], in nats
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logits, const std::vector<int64_t>& targets);

int64_t param_count(const ModelConfig& cfg);

// --- incremental decode ------------------------------------------------------

template <typename T>
struct DecodeState {
  int position = 0;  // next input row index: 0 = class token, t = token q_t
  std::vector<BlockState<T>> layers;
};

template <typename T>
DecodeState<T> init_decode_state(const ModelConfig& cfg);

// Embeds the next input row (class token at position 0, else token id) with
// its positional row, advances all blocks one step, returns logits [V].
// Never taped; bitwise-matches the corresponding model_forward row.
template <typename T>
Tensor<T> model_step(const ModelWeights<T>& w, const std::vector<Modulation<T>>& mods,
                     DecodeState<T>& st, int token_or_class);

}  // namespace aim
