#include "mtgrow/synth_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace mtgrow {

std::string to_string(Tier t) {
  switch (t) {
    case Tier::High: return "high";
    case Tier::Mid: return "mid";
    case Tier::Low: return "low";
    case Tier::VLow: return "v_low";
  }
  fail(ErrorKind::Domain, "bad Tier");
}

Tier tier_from_string(const std::string& s) {
  if (s == "high") return Tier::High;
  if (s == "mid") return Tier::Mid;
  if (s == "low") return Tier::Low;
  if (s == "v_low") return Tier::VLow;
  fail(ErrorKind::Domain, "unknown tier: '" + s + "'");
}

std::string to_string(ReorderRule r) {
  switch (r) {
    case ReorderRule::None: return "none";
    case ReorderRule::SwapAdjacent: return "swap_adjacent";
    case ReorderRule::ReverseWindow: return "reverse_window";
  }
  fail(ErrorKind::Domain, "bad ReorderRule");
}

ReorderRule reorder_from_string(const std::string& s) {
  if (s == "none") return ReorderRule::None;
  if (s == "swap_adjacent") return ReorderRule::SwapAdjacent;
  if (s == "reverse_window") return ReorderRule::ReverseWindow;
  fail(ErrorKind::Domain, "unknown reorder rule: '" + s + "'");
}

LanguageSpec eng_spec() {
  LanguageSpec s;
  s.language = kEngLanguage;
  s.script = "eng";
  s.cipher_seed = 0;
  s.reorder = ReorderRule::None;
  s.tier = Tier::High;
  return s;
}

std::string direction_key(const std::string& src_lang, const std::string& tgt_lang) {
  return src_lang + "-" + tgt_lang;
}

namespace {

void check_spec(const LanguageSpec& spec) {
  if (spec.language.empty()) fail(ErrorKind::Domain, "language code is empty");
  if (spec.script.empty()) fail(ErrorKind::Domain, "script id is empty");
  for (char c : spec.script)
    if (c == '_' || std::isspace(static_cast<unsigned char>(c)))
      fail(ErrorKind::Domain, "script id '" + spec.script + "' contains '_' or whitespace");
  if (spec.reorder == ReorderRule::ReverseWindow && spec.window < 2)
    fail(ErrorKind::Domain, "reverse_window needs window >= 2");
}

}  // namespace

std::vector<int64_t> cipher_permutation(uint64_t cipher_seed, int64_t lexicon_size) {
  if (lexicon_size < 1) fail(ErrorKind::Domain, "lexicon_size must be >= 1");
  std::vector<int64_t> perm(static_cast<size_t>(lexicon_size));
  std::iota(perm.begin(), perm.end(), 0);
  if (cipher_seed == 0) return perm;  // identity cipher by convention
  std::mt19937_64 rng(cipher_seed);
  for (int64_t i = lexicon_size - 1; i > 0; --i) {
    int64_t j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

std::string surface_token(const std::string& script, int64_t index) {
  return script + "_" + std::to_string(index);
}

void apply_reorder(ReorderRule rule, int64_t window, std::vector<int64_t>& ids) {
  switch (rule) {
    case ReorderRule::None:
      return;
    case ReorderRule::SwapAdjacent:
      for (size_t i = 0; i + 1 < ids.size(); i += 2) std::swap(ids[i], ids[i + 1]);
      return;
    case ReorderRule::ReverseWindow: {
      if (window < 2) fail(ErrorKind::Domain, "reverse_window needs window >= 2");
      for (size_t start = 0; start < ids.size(); start += static_cast<size_t>(window)) {
        size_t end = std::min(ids.size(), start + static_cast<size_t>(window));
        std::reverse(ids.begin() + static_cast<std::ptrdiff_t>(start),
                     ids.begin() + static_cast<std::ptrdiff_t>(end));
      }
      return;
    }
  }
}

std::string render_text(const LanguageSpec& spec, const std::vector<int64_t>& latent,
                        const std::vector<int64_t>& perm) {
  check_spec(spec);
  std::vector<int64_t> ids;
  ids.reserve(latent.size());
  for (int64_t id : latent) {
    if (id < 0 || id >= static_cast<int64_t>(perm.size()))
      fail(ErrorKind::Domain, "latent id " + std::to_string(id) + " outside the lexicon");
    ids.push_back(perm[static_cast<size_t>(id)]);
  }
  apply_reorder(spec.reorder, spec.window, ids);
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += surface_token(spec.script, ids[i]);
  }
  return out;
}

std::pair<DirectionSpec, DirectionSpec> gen_corpus(const LanguageSpec& spec, int64_t n_pairs,
                                                   uint64_t seed, int64_t lexicon_size) {
  check_spec(spec);
  if (n_pairs < 1) fail(ErrorKind::Domain, "n_pairs must be >= 1");
  if (lexicon_size < 2) fail(ErrorKind::Domain, "lexicon_size must be >= 2");

  // Zipf weights 1/(i+1); a single cumulative table serves every draw.
  std::vector<double> cum(static_cast<size_t>(lexicon_size));
  double total = 0.0;
  for (int64_t i = 0; i < lexicon_size; ++i) {
    total += 1.0 / static_cast<double>(i + 1);
    cum[static_cast<size_t>(i)] = total;
  }

  std::vector<int64_t> perm = cipher_permutation(spec.cipher_seed, lexicon_size);
  std::vector<int64_t> identity = cipher_permutation(0, lexicon_size);
  LanguageSpec eng = eng_spec();

  GaussianStream gs(mix_seed(seed, fnv1a(spec.language)));
  DirectionSpec fwd, rev;
  fwd.src_lang = kEngLanguage;
  fwd.tgt_lang = spec.language;
  rev.src_lang = spec.language;
  rev.tgt_lang = kEngLanguage;
  fwd.tier = rev.tier = spec.tier;
  fwd.pairs.reserve(static_cast<size_t>(n_pairs));
  rev.pairs.reserve(static_cast<size_t>(n_pairs));

  for (int64_t p = 0; p < n_pairs; ++p) {
    int64_t len = 3 + static_cast<int64_t>(gs.next_u64() % 10);  // 3..12
    std::vector<int64_t> latent(static_cast<size_t>(len));
    for (int64_t& id : latent) {
      double u = gs.uniform() * total;
      id = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
      if (id >= lexicon_size) id = lexicon_size - 1;
    }
    std::string eng_text = render_text(eng, latent, identity);
    std::string x_text = render_text(spec, latent, perm);
    fwd.pairs.emplace_back(eng_text, x_text);
    rev.pairs.emplace_back(x_text, eng_text);
  }
  return {std::move(fwd), std::move(rev)};
}

int64_t tier_size(Tier tier, double scale) {
  if (scale <= 0.0) fail(ErrorKind::Domain, "tier_size: scale must be > 0");
  int64_t base = 0;
  switch (tier) {
    case Tier::High: base = 20000; break;
    case Tier::Mid: base = 5000; break;
    case Tier::Low: base = 1000; break;
    case Tier::VLow: base = 200; break;
  }
  int64_t n = static_cast<int64_t>(std::floor(static_cast<double>(base) * scale));
  return std::max<int64_t>(10, n);
}

bool related(const LanguageSpec& a, const LanguageSpec& b) {
  return (a.cipher_seed >> 32) == (b.cipher_seed >> 32);
}

void save_pairs(const std::string& path,
                const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::string blob;
  for (const auto& [src, tgt] : pairs) {
    blob += src;
    blob += '\t';
    blob += tgt;
    blob += '\n';
  }
  write_file(path, blob);
}

std::vector<std::pair<std::string, std::string>> load_pairs(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      fail(ErrorKind::Io, path + ": line without a tab separator");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return pairs;
}

std::vector<LanguageCounts> corpus_counts(const std::vector<DirectionSpec>& directions) {
  std::map<std::string, std::map<std::string, int64_t>> by_language;
  for (const DirectionSpec& d : directions) {
    for (const auto& [src, tgt] : d.pairs) {
      for (const std::string& tok : split_ws(src)) by_language[d.src_lang][tok] += 1;
      for (const std::string& tok : split_ws(tgt)) by_language[d.tgt_lang][tok] += 1;
    }
  }
  std::vector<LanguageCounts> out;
  for (auto& [language, counts] : by_language) {
    LanguageCounts lc;
    lc.language = language;
    lc.counts = std::move(counts);
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace mtgrow
