#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mtgrow/common.hpp"

namespace mtgrow {

constexpr int32_t kPadId = 0;
constexpr int32_t kUnkId = 1;
constexpr int32_t kBosId = 2;
constexpr int32_t kEosId = 3;

// Whole-token vocabulary. Ids are dense 0..N-1 with the four reserved tokens
// pinned at 0..3 and one <lang:xx> tag per language seen at build time.
struct Vocab {
  std::vector<std::string> tokens;                    // id -> surface
  std::unordered_map<std::string, int32_t> token_to_id;
  std::vector<std::string> languages;                 // in tag id order

  // Rebuild the maps from a flat token list (checkpoint load path).
  // Validates reserved positions and uniqueness.
  static Vocab from_tokens(std::vector<std::string> toks);

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  int32_t lookup_or_unk(const std::string& tok) const;
  bool contains(const std::string& tok) const { return token_to_id.count(tok) > 0; }
  // Tag id for a language; Vocab error if the language has no tag token.
  int32_t tag_id(const std::string& language) const;
};

std::string tag_token(const std::string& language);
bool is_tag_token(const std::string& tok);

// Per-language token counts feeding build_vocab.
struct LanguageCounts {
  std::string language;
  std::map<std::string, int64_t> counts;
};

// Pairs of ids whose surface strings match exactly between two vocabs.
struct VocabMapping {
  std::vector<std::pair<int32_t, int32_t>> pairs;  // (old_id, new_id)
  double coverage = 0.0;                           // |pairs| / |new vocab|
};

// Temperature-weighted truncation: each language's counts are rescaled so its
// total mass becomes mass^(1/temperature); the top (size - reserved - tags)
// tokens by rescaled count survive, ties broken by lexicographic token order.
Vocab build_vocab(const std::vector<LanguageCounts>& corpora, int64_t size, double temperature);

// [tag, tokens..., <eos>]; out-of-vocab tokens (including an unseen tag) -> <unk>.
std::vector<int32_t> encode(const Vocab& vocab, const std::string& language, const std::string& text);

// Inverse of encode on in-vocab text: skips pad/bos/eos and tag tokens,
// renders <unk> literally. Out-of-range id is a Vocab error.
std::string decode(const Vocab& vocab, const std::vector<int32_t>& ids);

VocabMapping overlap_map(const Vocab& old_vocab, const Vocab& new_vocab);

}  // namespace mtgrow
