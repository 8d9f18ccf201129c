#pragma once

#include <string>

#include "mtgrow/model.hpp"
#include "mtgrow/vocab.hpp"

#include "json.hpp"

namespace mtgrow {

// On-disk container, fixed layout:
//   bytes 0..7    magic "MTGROW01"
//   bytes 8..15   header length, unsigned 64-bit little-endian
//   header        UTF-8 JSON: {format_version, config, vocab, step, tensors}
//   blobs         raw f64 little-endian tensor data, contiguous, in the
//                 lexicographic order of the index names
// Index names carry a section prefix: "param.", "adam_m.", "adam_v.".
// Offsets are relative to the first blob byte (header end).
//
// Load is fail-closed with distinct error kinds: BadMagic, BadVersion,
// Truncated (file shorter than claimed, or header unparseable), IndexMismatch
// (structurally valid file whose index disagrees with itself or the config).
struct Checkpoint {
  ModelConfig config;
  Vocab vocab;
  NamedParamMap params;
  // Adam moments keyed by parameter name; a name absent from both maps means
  // fresh (zero) state. Names present must appear in both, shapes matching.
  NamedParamMap adam_m;
  NamedParamMap adam_v;
  int64_t step = 0;
};

constexpr const char* kCheckpointMagic = "MTGROW01";
constexpr int64_t kCheckpointFormatVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

bool checkpoint_equal(const Checkpoint& a, const Checkpoint& b);

// ModelConfig <-> JSON, shared with the manifest parser.
nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace mtgrow
