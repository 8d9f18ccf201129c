#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtgrow/common.hpp"
#include "mtgrow/vocab.hpp"

namespace mtgrow {

enum class Tier { High, Mid, Low, VLow };
std::string to_string(Tier t);
Tier tier_from_string(const std::string& s);

// All rules are involutions, so a rule is its own inverse.
enum class ReorderRule { None, SwapAdjacent, ReverseWindow };
std::string to_string(ReorderRule r);
ReorderRule reorder_from_string(const std::string& s);

// A synthetic language: a bijective relabeling of a shared latent lexicon,
// rendered in a script (disjoint surface prefix) with an optional word-order
// rule. Languages sharing a script share surface tokens; languages sharing
// the high 32 bits of the cipher seed count as related (a language family).
struct LanguageSpec {
  std::string language;
  std::string script;        // surface prefix; no whitespace or '_'
  uint64_t cipher_seed = 0;  // 0 is reserved for the identity cipher
  ReorderRule reorder = ReorderRule::None;
  int64_t window = 2;  // block size for reverse_window
  Tier tier = Tier::Low;
};

inline const char* kEngLanguage = "eng";

// English stands in as the latent lexicon itself: identity cipher, no
// reordering, script "eng".
LanguageSpec eng_spec();

struct DirectionSpec {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<std::pair<std::string, std::string>> pairs;  // (src text, tgt text)
  Tier tier = Tier::Low;
  double alpha = 1.0;

  int64_t size() const { return static_cast<int64_t>(pairs.size()); }
};

std::string direction_key(const std::string& src_lang, const std::string& tgt_lang);  // "src-tgt"

// Bijection over 0..lexicon_size-1. Seed 0 returns the identity; anything
// else is a Fisher-Yates shuffle of it.
std::vector<int64_t> cipher_permutation(uint64_t cipher_seed, int64_t lexicon_size);

std::string surface_token(const std::string& script, int64_t index);

// In-place word reordering; applying it twice restores the input.
void apply_reorder(ReorderRule rule, int64_t window, std::vector<int64_t>& ids);

// Latent ids -> ciphered, reordered, script-prefixed text.
std::string render_text(const LanguageSpec& spec, const std::vector<int64_t>& latent,
                        const std::vector<int64_t>& perm);

// Sample n_pairs latent sentences (length 3-12, Zipf-weighted ids) and render
// the eng->X and X->eng directions over the same mirrored pairs.
std::pair<DirectionSpec, DirectionSpec> gen_corpus(const LanguageSpec& spec, int64_t n_pairs,
                                                   uint64_t seed, int64_t lexicon_size);

// high=20000*scale, mid=5000*scale, low=1000*scale, v_low=200*scale,
// floored, never below 10.
int64_t tier_size(Tier tier, double scale = 1.0);

bool related(const LanguageSpec& a, const LanguageSpec& b);

// One tab-separated pair per line, UTF-8.
void save_pairs(const std::string& path,
                const std::vector<std::pair<std::string, std::string>>& pairs);
std::vector<std::pair<std::string, std::string>> load_pairs(const std::string& path);

// Whitespace token counts per language over both sides of every direction,
// in the shape build_vocab consumes.
std::vector<LanguageCounts> corpus_counts(const std::vector<DirectionSpec>& directions);

}  // namespace mtgrow
