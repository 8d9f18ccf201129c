#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtgrow/tape.hpp"

namespace mtgrow {

struct ModelConfig {
  int64_t enc_layers = 4;
  int64_t dec_layers = 4;
  int64_t model_dim = 64;
  int64_t ffn_hidden_dim = 128;
  int64_t heads = 4;
  int64_t vocab_size = 512;
  double attention_dropout = 0.1;
  double label_smoothing_epsilon = 0.1;
  int64_t max_positions = 128;

  // Domain errors for hard invariants; ffn_hidden_dim < model_dim only warns.
  void validate() const;
};

// Canonical parameter naming, fixed so surgery and learning-rate groups can
// address tensors by string pattern:
//   embedding.table                                   [vocab, d]   (tied)
//   {encoder|decoder}.layer.<i>.attn.{wq,wk,wv,wo}    [d, d]
//   {encoder|decoder}.layer.<i>.attn.{bq,bk,bv,bo}    [d]
//   decoder.layer.<i>.cross_attn.{wq,..,bo}           as above
//   {encoder|decoder}.layer.<i>.{attn_norm,ffn_norm}.{gain,bias}  [d]
//   decoder.layer.<i>.cross_norm.{gain,bias}          [d]
//   {encoder|decoder}.layer.<i>.ffn.w1 [ffn, d]  .b1 [ffn]  .w2 [d, ffn]  .b2 [d]
//   {encoder|decoder}.final_norm.{gain,bias}          [d]
// Linear convention: y = x * W^T + b with W stored [out, in].
using NamedParamMap = std::map<std::string, Tensor>;

std::map<std::string, std::vector<int64_t>> expected_param_shapes(const ModelConfig& cfg);

// Gaussian std = model_dim^(-1/2) for projections and the embedding table,
// layer-norm gains 1, all biases 0. Each tensor's stream is seeded from
// (seed, name) so the result does not depend on construction order.
NamedParamMap init_model(const ModelConfig& cfg, uint64_t seed);

int64_t param_count(const NamedParamMap& params);

// One sentence pair, already id-encoded:
//   src     [src tag, tokens..., <eos>]
//   tgt_in  [<bos>, tgt tag, tokens...]
//   tgt_out [tgt tag, tokens..., <eos>]
struct Example {
  std::vector<int32_t> src;
  std::vector<int32_t> tgt_in;
  std::vector<int32_t> tgt_out;
};

// Padded id matrices, row-major [size, len], pad = <pad>.
struct Batch {
  int64_t size = 0;
  int64_t src_len = 0;
  int64_t tgt_len = 0;
  std::vector<int32_t> src;
  std::vector<int32_t> tgt_in;
  std::vector<int32_t> tgt_out;

  static Batch from_examples(const std::vector<Example>& examples);
};

// Seeded attention-dropout state; masks are a pure function of (seed, call index).
struct DropoutCtx {
  bool train = false;
  double rate = 0.0;
  uint64_t seed = 0;
  uint64_t counter = 0;
};

std::map<std::string, Tape::NodeId> push_params(Tape& tape, const NamedParamMap& params);

// Encoder stack over one source sentence: embeddings * sqrt(d) + sinusoidal
// positions, pre-norm residual blocks, final layer norm. Output [S, d].
Tape::NodeId encode_src(Tape& tape, const std::map<std::string, Tape::NodeId>& p,
                        const ModelConfig& cfg, const std::vector<int32_t>& src, DropoutCtx* dc);

// Decoder stack (causal self-attention + cross-attention) over one target
// prefix, ending in output logits [T, vocab] through the tied embedding table.
Tape::NodeId decode_logits(Tape& tape, const std::map<std::string, Tape::NodeId>& p,
                           const ModelConfig& cfg, Tape::NodeId enc_out,
                           const std::vector<int32_t>& tgt_in, DropoutCtx* dc);

// Loss node for a batch: per-sentence label-smoothed NLL means combined with
// token-count weights, so the result is the mean over all non-pad targets.
// token_count receives the total; a batch with zero targets yields a constant
// zero node.
Tape::NodeId forward_loss_node(Tape& tape, const std::map<std::string, Tape::NodeId>& p,
                               const ModelConfig& cfg, const Batch& batch, DropoutCtx* dc,
                               int64_t* token_count);

struct LossResult {
  double loss = 0.0;
  int64_t tokens = 0;
};

// Evaluation-mode (train=false) runs without dropout on a non-recording tape.
LossResult forward_loss(const NamedParamMap& params, const ModelConfig& cfg, const Batch& batch,
                        bool train = false, uint64_t dropout_seed = 0);

}  // namespace mtgrow
