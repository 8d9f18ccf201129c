#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtgrow/model.hpp"
#include "mtgrow/surgery.hpp"
#include "mtgrow/synth_data.hpp"
#include "mtgrow/trainer.hpp"

#include "json.hpp"

namespace mtgrow {

// Per-group learning-rate scale over the continual phase. A ramp of 0 holds
// the end value from step one; an absent ramp field defaults to the phase's
// total budget at parse time.
struct GammaSchedule {
  double start = 1.0;
  double end = 1.0;
  int64_t ramp_steps = 0;
};

struct DataSettings {
  int64_t lexicon_size = 96;
  double corpus_scale = 1.0;  // multiplier on the tier sizes
  int64_t val_pairs = 16;
  int64_t test_pairs = 32;
  std::vector<LanguageSpec> languages;  // everything except the implicit eng
};

struct VocabSettings {
  int64_t seed_size = 512;   // tokenizer over the old languages
  int64_t grown_size = 640;  // tokenizer over old + new
  double temperature = 1.0;
};

struct EvalSettings {
  int64_t beam = 4;
  double length_penalty = 1.0;
  int64_t max_len = 0;  // 0: derive from max_positions
};

struct FisherSettings {
  double threshold = 1e-5;
  double gamma_old = 0.25;
  int64_t max_dev_pairs = 8;  // per direction
};

// The whole experiment: synthetic world, seed phase, growth surgery, continual
// phase, and probe settings. Every stage derives its RNG streams from
// master_seed, so a manifest pins the run byte-for-byte.
struct ExperimentManifest {
  std::string name = "experiment";
  uint64_t master_seed = 0;
  std::string output_dir;

  DataSettings data;
  std::vector<std::string> old_languages;
  std::vector<std::string> new_languages;
  VocabSettings vocab;
  ModelConfig model;  // vocab_size is overwritten once the tokenizer exists

  TrainConfig seed_phase;       // seed field derived from master_seed
  GrowthPlan growth;            // target_vocab and seed filled at stage time
  bool random_init_all = false; // replace surgery with a fresh init
  TrainConfig continual_phase;
  GammaSchedule gamma_old;
  GammaSchedule gamma_new;

  EvalSettings eval;
  FisherSettings fisher;
};

// Strict parse: unknown keys, wrong types, and semantic violations all raise
// Manifest errors carrying the dotted field path.
ExperimentManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const ExperimentManifest& m);
ExperimentManifest load_manifest(const std::string& path);
void validate_manifest(const ExperimentManifest& m);

// FNV-1a over the canonical (key-sorted) serialization; stamped into every
// stage output so artifacts cannot silently cross manifests.
uint64_t manifest_hash(const ExperimentManifest& m);

// Sets one leaf addressed by dotted path ("continual_phase.total_steps",
// "data.languages.2.tier") on the raw JSON, before parsing. The leaf must
// already exist; the value string is coerced to the leaf's current type.
void apply_override(nlohmann::json& manifest_json, const std::string& dotted_path,
                    const std::string& value);

enum class AblationAxis { RandomInitAll, RandomInitNew, NoUpsampling, NoLrScaling };
std::string to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(const std::string& s);

// Derived manifest toggling exactly the fields the axis names, nothing else.
ExperimentManifest ablation(const ExperimentManifest& base, AblationAxis axis);

}  // namespace mtgrow
