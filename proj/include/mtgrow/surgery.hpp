#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtgrow/checkpoint.hpp"

namespace mtgrow {

enum class EmbeddingInit { UnkCopy, RandomNew, RandomAll };
enum class WidthInit { ConcatNoise, LinearInterp, RandomExpand };
enum class NormMode { FrobeniusMatch, FunctionPreserve, None };
enum class DepthInit { AverageLayer, ClosestLayer, Random };

std::string to_string(EmbeddingInit v);
std::string to_string(WidthInit v);
std::string to_string(NormMode v);
std::string to_string(DepthInit v);
EmbeddingInit embedding_init_from_string(const std::string& s);
WidthInit width_init_from_string(const std::string& s);
NormMode norm_mode_from_string(const std::string& s);
DepthInit depth_init_from_string(const std::string& s);

struct WidthPlan {
  int64_t factor = 1;  // 1 = unchanged
  WidthInit init = WidthInit::ConcatNoise;
  double noise_std = 0.01;
  NormMode norm = NormMode::FrobeniusMatch;
};

struct DepthPlan {
  int64_t enc_count = 0;
  int64_t dec_count = 0;
  std::string enc_position = "bottom";  // only "bottom" is implemented
  std::string dec_position = "top";     // only "top" is implemented
  DepthInit init = DepthInit::AverageLayer;
};

struct GrowthPlan {
  Vocab target_vocab;
  EmbeddingInit embedding_init = EmbeddingInit::UnkCopy;
  WidthPlan width;
  DepthPlan depth;
  uint64_t seed = 0;
};

// How each element of the grown checkpoint came to be.
enum class Provenance { Copied, CopiedNoisy, Interpolated, UnkRow, FreshRandom, LayerAverage };
std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Run-length encoding over the flattened (row-major) tensor. The is_new runs
// are the old/new split later consumed by learning-rate group construction:
// copied elements are old, everything introduced by surgery is new.
struct ElementRuns {
  std::vector<std::pair<Provenance, int64_t>> provenance;
  std::vector<std::pair<bool, int64_t>> is_new;

  int64_t total() const;
  void append(Provenance p, bool fresh, int64_t count);
};

struct SurgeryReport {
  double overlap_coverage = 1.0;
  std::map<std::string, std::string> choices;      // strategies actually applied
  std::map<std::string, ElementRuns> tensors;      // keyed by grown parameter name
  std::map<std::string, std::string> source_name;  // grown name -> seed name ("" if fresh)
};

nlohmann::json report_to_json(const SurgeryReport& report);
SurgeryReport report_from_json(const nlohmann::json& j);

// Replace the embedding table for a new vocabulary. Mapped rows are copied;
// the rest follow the strategy (unk_copy: old <unk> row; random_new: Gaussian
// std model_dim^(-1/2); random_all ignores the mapping and redraws the whole
// table). Replaces the vocab, updates config.vocab_size, and drops the
// embedding moments unless the table came out bitwise identical.
Checkpoint remap_embeddings(const Checkpoint& ckpt, const Vocab& new_vocab,
                            const VocabMapping& mapping, EmbeddingInit strategy, uint64_t seed);

// Layer prefixes ("encoder.layer.0", ...) in the fixed encoder-then-decoder
// order used by every per-layer FFN walk.
std::vector<std::string> ffn_prefixes(const ModelConfig& cfg);

// Multiply every FFN hidden dimension by `factor`. Strategies follow the
// block semantics documented in the implementation; norm_mode rescales the
// expanded W2' (frobenius_match to the old Frobenius norm, function_preserve
// by 1/factor). Noise streams are seeded per layer from (seed, ffn prefix).
Checkpoint widen_ffn(const Checkpoint& ckpt, int64_t factor, WidthInit strategy, double noise_std,
                     NormMode norm_mode, uint64_t seed);

// Insert enc_count layers at the encoder bottom (old layers shift up) and
// dec_count layers at the decoder top. average_layer: per-tensor mean over
// the stack's pre-existing layers; closest_layer: copy of the first encoder /
// last decoder layer; random: fresh init seeded from (seed, new tensor name).
Checkpoint deepen(const Checkpoint& ckpt, int64_t enc_count, int64_t dec_count,
                  const std::string& enc_position, const std::string& dec_position,
                  DepthInit strategy, uint64_t seed);

// remap_embeddings, then widen_ffn, then deepen, with full provenance and the
// old/new partition. Never mutates the input.
std::pair<Checkpoint, SurgeryReport> grow(const Checkpoint& ckpt, const GrowthPlan& plan);

}  // namespace mtgrow
