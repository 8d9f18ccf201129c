#include "mtgrow/vocab.hpp"

#include <algorithm>
#include <cmath>

namespace mtgrow {

namespace {
const char* kReserved[4] = {"<pad>", "<unk>", "<bos>", "<eos>"};
}

std::string tag_token(const std::string& language) { return "<lang:" + language + ">"; }

bool is_tag_token(const std::string& tok) {
  return tok.size() > 7 && tok.compare(0, 6, "<lang:") == 0 && tok.back() == '>';
}

Vocab Vocab::from_tokens(std::vector<std::string> toks) {
  if (toks.size() < 4) fail(ErrorKind::Vocab, "vocab needs at least the 4 reserved tokens");
  for (int i = 0; i < 4; ++i) {
    if (toks[static_cast<size_t>(i)] != kReserved[i])
      fail(ErrorKind::Vocab, "reserved token slot " + std::to_string(i) + " holds '" +
                                 toks[static_cast<size_t>(i)] + "', expected '" + kReserved[i] + "'");
  }
  Vocab v;
  v.tokens = std::move(toks);
  for (int32_t id = 0; id < v.size(); ++id) {
    const std::string& tok = v.tokens[static_cast<size_t>(id)];
    if (!v.token_to_id.emplace(tok, id).second)
      fail(ErrorKind::Vocab, "duplicate token in vocab: '" + tok + "'");
    if (is_tag_token(tok)) v.languages.push_back(tok.substr(6, tok.size() - 7));
  }
  return v;
}

int32_t Vocab::lookup_or_unk(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? kUnkId : it->second;
}

int32_t Vocab::tag_id(const std::string& language) const {
  auto it = token_to_id.find(tag_token(language));
  if (it == token_to_id.end()) fail(ErrorKind::Vocab, "no tag token for language '" + language + "'");
  return it->second;
}

Vocab build_vocab(const std::vector<LanguageCounts>& corpora, int64_t size, double temperature) {
  if (corpora.empty()) fail(ErrorKind::Vocab, "build_vocab: empty corpora");
  if (temperature < 1.0) fail(ErrorKind::Domain, "build_vocab: temperature must be >= 1");

  // Merge multiple entries for the same language before computing its mass.
  std::map<std::string, std::map<std::string, int64_t>> by_lang;
  for (const auto& lc : corpora) {
    auto& counts = by_lang[lc.language];
    for (const auto& [tok, c] : lc.counts) {
      if (c < 0) fail(ErrorKind::Domain, "negative count for token '" + tok + "'");
      counts[tok] += c;
    }
  }

  std::vector<std::string> toks(kReserved, kReserved + 4);
  for (const auto& [lang, counts] : by_lang) {
    (void)counts;
    toks.push_back(tag_token(lang));
  }
  int64_t keep = size - static_cast<int64_t>(toks.size());
  if (keep <= 0)
    fail(ErrorKind::Vocab, "build_vocab: size " + std::to_string(size) +
                               " cannot hold reserved + tag tokens (" +
                               std::to_string(toks.size()) + ")");

  // Language mass n_d becomes n_d^(1/T): scale every count in d by the ratio.
  std::map<std::string, double> rescaled;
  for (const auto& [lang, counts] : by_lang) {
    double mass = 0.0;
    for (const auto& [tok, c] : counts) {
      (void)tok;
      mass += static_cast<double>(c);
    }
    if (mass <= 0.0) continue;
    double scale = std::pow(mass, 1.0 / temperature) / mass;
    for (const auto& [tok, c] : counts) rescaled[tok] += static_cast<double>(c) * scale;
  }

  std::vector<std::pair<std::string, double>> items(rescaled.begin(), rescaled.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::unordered_map<std::string, int> present;
  for (const auto& t : toks) present[t] = 1;
  for (const auto& [tok, cnt] : items) {
    (void)cnt;
    if (static_cast<int64_t>(toks.size()) >= size) break;
    if (present.count(tok)) continue;  // corpus token colliding with a special
    toks.push_back(tok);
    present[tok] = 1;
  }
  return Vocab::from_tokens(std::move(toks));
}

std::vector<int32_t> encode(const Vocab& vocab, const std::string& language, const std::string& text) {
  std::vector<int32_t> ids;
  ids.push_back(vocab.lookup_or_unk(tag_token(language)));
  for (const auto& tok : split_ws(text)) ids.push_back(vocab.lookup_or_unk(tok));
  ids.push_back(kEosId);
  return ids;
}

std::string decode(const Vocab& vocab, const std::vector<int32_t>& ids) {
  std::string out;
  for (int32_t id : ids) {
    if (id < 0 || id >= vocab.size())
      fail(ErrorKind::Vocab, "decode: id " + std::to_string(id) + " outside [0," +
                                 std::to_string(vocab.size()) + ")");
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    const std::string& tok = vocab.tokens[static_cast<size_t>(id)];
    if (is_tag_token(tok)) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

VocabMapping overlap_map(const Vocab& old_vocab, const Vocab& new_vocab) {
  VocabMapping m;
  for (int32_t nid = 0; nid < new_vocab.size(); ++nid) {
    auto it = old_vocab.token_to_id.find(new_vocab.tokens[static_cast<size_t>(nid)]);
    if (it != old_vocab.token_to_id.end()) m.pairs.emplace_back(it->second, nid);
  }
  m.coverage = new_vocab.size() == 0
                   ? 0.0
                   : static_cast<double>(m.pairs.size()) / static_cast<double>(new_vocab.size());
  return m;
}

}  // namespace mtgrow
