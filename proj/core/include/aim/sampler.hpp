#pragma once

#include <vector>

#include "aim/model.hpp"

namespace aim {

struct GuidanceConfig {
  double w = 2.0;           // guidance scale
  double temperature = 1.0;
  int top_k = 0;            // 0 = disabled
  double top_p = 0.0;       // 0 = disabled, else in (0, 1]
  bool argmax = false;      // temperature -> 0 limit, lowest-index tie-break
  bool prob_space = false;  // literal probability-space interpolation (w in [0,1])

  void validate() const;
};

// guided = (1-w)*uncond + w*cond, applied to logits (log space) by default.
// prob_space applies the same affine form to softmax probabilities instead and
// returns log of the mix; it requires w in [0,1] to keep the mix nonnegative.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& uncond, const Tensor<T>& cond, double w,
                      bool prob_space = false);

// temperature, then top-k, then top-p (renormalized), then a categorical draw
template <typename T>
int sample_token(const Tensor<T>& logits, const GuidanceConfig& g, Rng& rng);

// Two synchronized decode streams (conditional / null); only the needed
// stream(s) advance: w=1 conditional only, w=0 null only. State size is
// constant in the cursor.
template <typename T>
struct DecodeSession {
  int class_id = 0;
  int cursor = 0;
  int last_token = -1;
  std::vector<Modulation<T>> mods_cond, mods_null;
  DecodeState<T> cond_state, null_state;
  Rng rng;
};

template <typename T>
DecodeSession<T> begin_session(const ModelWeights<T>& w, int class_id, Rng rng,
                               const GuidanceConfig& g);

// Guided logits for the current cursor position, given the previously sampled
// token (class token at cursor 0). Advances the stream states.
template <typename T>
Tensor<T> session_logits(DecodeSession<T>& s, const ModelWeights<T>& w, const GuidanceConfig& g);

// session_logits + sample_token + feed back; returns the sampled token
template <typename T>
int session_step(DecodeSession<T>& s, const ModelWeights<T>& w, const GuidanceConfig& g);

template <typename T>
std::vector<std::vector<uint16_t>> generate(const ModelWeights<T>& w, int class_id, int n_samples,
                                            const GuidanceConfig& g, uint64_t seed);

}  // namespace aim
