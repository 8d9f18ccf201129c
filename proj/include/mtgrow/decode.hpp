#pragma once

#include <cstdint>
#include <vector>

#include "mtgrow/model.hpp"

namespace mtgrow {

// Tape-free incremental decoder. The encoder runs once at construction (the
// result and the per-layer cross-attention K/V are cached); each step() feeds
// one target token, extends the self-attention caches, and returns the
// log-probabilities of the next token. Borrows params: they must outlive the
// engine.
class InferenceEngine {
 public:
  InferenceEngine(const NamedParamMap& params, const ModelConfig& cfg,
                  const std::vector<int32_t>& src);

  struct State {
    // per decoder layer, row-major [steps, d]
    std::vector<std::vector<double>> k_self;
    std::vector<std::vector<double>> v_self;
    int64_t steps = 0;
  };

  State new_state() const;
  // Feed `token` at the next position; returns log-softmax over the vocab.
  std::vector<double> step(State& state, int32_t token) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  struct AttnRefs {
    const Tensor *wq, *wk, *wv, *wo, *bq, *bk, *bv, *bo;
  };
  struct NormRefs {
    const Tensor *gain, *bias;
  };
  struct DecLayer {
    AttnRefs self, cross;
    NormRefs self_norm, cross_norm, ffn_norm;
    const Tensor *w1, *b1, *w2, *b2;
  };

  const NamedParamMap& params_;
  ModelConfig cfg_;
  std::vector<DecLayer> layers_;
  NormRefs final_norm_;
  const Tensor* embedding_;
  std::vector<double> enc_out_;                    // [src_len, d]
  std::vector<std::vector<double>> k_cross_, v_cross_;  // per layer [src_len, d]
  int64_t src_len_ = 0;
};

// Beam search: score = sum(logprob) / steps^length_penalty where steps counts
// every generated token including the terminating <eos>. Hypotheses that hit
// max_len without <eos> compete as truncated candidates. Ties resolve to the
// lexicographically smaller token sequence. forced_prefix (normally the
// target-language tag) is fed after <bos> but never scored; the returned
// sequence holds only the freely generated tokens, without the final <eos>.
std::vector<int32_t> decode_beam(const NamedParamMap& params, const ModelConfig& cfg,
                                 const std::vector<int32_t>& src_ids,
                                 const std::vector<int32_t>& forced_prefix, int64_t beam,
                                 int64_t max_len, double length_penalty);

}  // namespace mtgrow
