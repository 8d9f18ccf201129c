#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "mtgrow/vocab.hpp"

using namespace mtgrow;

TEST_CASE("single language at temperature 1 is plain frequency truncation") {
  LanguageCounts lc{"aaa", {{"w1", 50}, {"w2", 40}, {"w3", 30}, {"w4", 20}, {"w5", 10}}};
  // 4 reserved + 1 tag + 3 content
  Vocab v = build_vocab({lc}, 8, 1.0);
  CHECK(v.size() == 8);
  CHECK(v.contains("w1"));
  CHECK(v.contains("w2"));
  CHECK(v.contains("w3"));
  CHECK(!v.contains("w4"));
  CHECK(!v.contains("w5"));
  CHECK(v.tokens[0] == "<pad>");
  CHECK(v.tokens[1] == "<unk>");
  CHECK(v.tokens[2] == "<bos>");
  CHECK(v.tokens[3] == "<eos>");
  CHECK(v.tag_id("aaa") == 4);
  CHECK(v.languages == std::vector<std::string>{"aaa"});
}

TEST_CASE("temperature 2 turns mass ratio 1:4 into 1:2") {
  // lang a mass 100 (a1 60, a2 40), lang b mass 400 (b1 300, b2 100).
  // Rescaled: a1 6, a2 4, b1 15, b2 5. Keeping 2 picks {b1, a1};
  // raw counts would have picked {b1, b2}.
  LanguageCounts a{"aa", {{"a1", 60}, {"a2", 40}}};
  LanguageCounts b{"bb", {{"b1", 300}, {"b2", 100}}};
  Vocab v = build_vocab({a, b}, 8, 2.0);
  CHECK(v.contains("b1"));
  CHECK(v.contains("a1"));
  CHECK(!v.contains("b2"));
  CHECK(!v.contains("a2"));

  Vocab raw = build_vocab({a, b}, 8, 1.0);
  CHECK(raw.contains("b1"));
  CHECK(raw.contains("b2"));
  CHECK(!raw.contains("a1"));
}

TEST_CASE("membership matches an exhaustive sort oracle on a three-language corpus") {
  // Deterministic pseudo-random counts, then an independent oracle that
  // enumerates every token, rescales, sorts, and truncates.
  std::vector<LanguageCounts> corpora(3);
  const char* langs[3] = {"lpa", "lpb", "lpc"};
  uint64_t state = 12345;
  auto next = [&state]() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return (state >> 33) % 97 + 1;
  };
  for (int d = 0; d < 3; ++d) {
    corpora[static_cast<size_t>(d)].language = langs[d];
    for (int w = 0; w < 30; ++w) {
      std::string tok = std::string(langs[d]) + "_w" + std::to_string(w % 20);  // some repeats
      corpora[static_cast<size_t>(d)].counts[tok] += static_cast<int64_t>(next());
    }
  }
  double temperature = 2.0;
  int64_t size = 20;

  // oracle
  std::map<std::string, double> mass;
  for (const auto& lc : corpora) {
    double m = 0;
    for (auto& [t, c] : lc.counts) {
      (void)t;
      m += static_cast<double>(c);
    }
    for (auto& [t, c] : lc.counts)
      mass[t] += static_cast<double>(c) * std::pow(m, 1.0 / temperature) / m;
  }
  std::vector<std::pair<std::string, double>> all(mass.begin(), mass.end());
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  std::set<std::string> expect;
  size_t budget = static_cast<size_t>(size) - 4 - 3;  // reserved + three tags
  for (size_t i = 0; i < budget && i < all.size(); ++i) expect.insert(all[i].first);

  Vocab v = build_vocab(corpora, size, temperature);
  std::set<std::string> got;
  for (int32_t id = 7; id < v.size(); ++id) got.insert(v.tokens[static_cast<size_t>(id)]);
  CHECK(got == expect);
  CHECK(v.size() == 20);
}

TEST_CASE("tie-break is lexicographic") {
  LanguageCounts lc{"tt", {{"zz", 5}, {"aa", 5}, {"mm", 5}}};
  Vocab v = build_vocab({lc}, 6, 1.0);  // room for exactly one content token
  CHECK(v.contains("aa"));
  CHECK(!v.contains("mm"));
  CHECK(!v.contains("zz"));
}

TEST_CASE("build_vocab is deterministic") {
  LanguageCounts a{"qa", {{"x", 3}, {"y", 9}, {"z", 9}}};
  LanguageCounts b{"qb", {{"u", 2}, {"x", 4}}};
  Vocab v1 = build_vocab({a, b}, 10, 1.5);
  Vocab v2 = build_vocab({a, b}, 10, 1.5);
  CHECK(v1.tokens == v2.tokens);
}

TEST_CASE("build_vocab error cases") {
  CHECK_THROWS_AS(build_vocab({}, 10, 1.0), Error);
  LanguageCounts lc{"ee", {{"w", 1}}};
  try {
    build_vocab({lc}, 5, 1.0);  // 4 reserved + 1 tag leaves no room
    FAIL("expected size error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Vocab);
  }
  CHECK_THROWS_AS(build_vocab({lc}, 10, 0.5), Error);
}

TEST_CASE("encode frames with tag and eos, decode round-trips") {
  LanguageCounts lc{"rr", {{"hello", 5}, {"world", 4}, {"again", 3}}};
  Vocab v = build_vocab({lc}, 10, 1.0);
  auto ids = encode(v, "rr", "hello world again");
  REQUIRE(ids.size() == 5);
  CHECK(ids.front() == v.tag_id("rr"));
  CHECK(ids.back() == kEosId);
  CHECK(decode(v, ids) == "hello world again");
}

TEST_CASE("out-of-vocab tokens become unk, rendered literally by decode") {
  LanguageCounts lc{"rr", {{"hello", 5}}};
  Vocab v = build_vocab({lc}, 6, 1.0);
  auto ids = encode(v, "rr", "hello missing");
  CHECK(ids[1] == v.token_to_id.at("hello"));
  CHECK(ids[2] == kUnkId);
  CHECK(decode(v, ids) == "hello <unk>");
  // unseen language: the tag position itself degrades to unk
  auto foreign = encode(v, "xx", "hello");
  CHECK(foreign[0] == kUnkId);
}

TEST_CASE("decode rejects out-of-range ids") {
  Vocab v = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>"});
  CHECK_THROWS_AS(decode(v, {4}), Error);
  CHECK_THROWS_AS(decode(v, {-1}), Error);
}

TEST_CASE("from_tokens validates reserved slots and duplicates") {
  CHECK_THROWS_AS(Vocab::from_tokens({"<unk>", "<pad>", "<bos>", "<eos>"}), Error);
  CHECK_THROWS_AS(Vocab::from_tokens({"<pad>", "<unk>", "<bos>"}), Error);
  CHECK_THROWS_AS(Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "w", "w"}), Error);
}

TEST_CASE("overlap_map on simple set intersection") {
  Vocab oldv = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "a", "b", "c"});
  Vocab newv = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "b", "c", "d"});
  VocabMapping m = overlap_map(oldv, newv);
  // 4 reserved + b + c
  CHECK(m.pairs.size() == 6);
  std::set<std::pair<int32_t, int32_t>> got(m.pairs.begin(), m.pairs.end());
  CHECK(got.count({5, 4}) == 1);  // b
  CHECK(got.count({6, 5}) == 1);  // c
  CHECK(m.coverage == doctest::Approx(6.0 / 7.0));
}

TEST_CASE("overlap_map of identical vocabs is the identity bijection") {
  LanguageCounts lc{"ii", {{"p", 3}, {"q", 2}, {"r", 1}}};
  Vocab v = build_vocab({lc}, 8, 1.0);
  VocabMapping m = overlap_map(v, v);
  CHECK(m.coverage == 1.0);
  CHECK(static_cast<int32_t>(m.pairs.size()) == v.size());
  for (const auto& [o, n] : m.pairs) CHECK(o == n);
}

TEST_CASE("overlap_map is symmetric up to transposition") {
  Vocab a = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "x", "y"});
  Vocab b = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "y", "z", "x"});
  VocabMapping ab = overlap_map(a, b);
  VocabMapping ba = overlap_map(b, a);
  std::set<std::pair<int32_t, int32_t>> fwd(ab.pairs.begin(), ab.pairs.end());
  for (const auto& [o, n] : ba.pairs) CHECK(fwd.count({n, o}) == 1);
  CHECK(ab.pairs.size() == ba.pairs.size());
}

TEST_CASE("each id appears at most once per side") {
  Vocab a = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "m", "n", "o"});
  Vocab b = Vocab::from_tokens({"<pad>", "<unk>", "<bos>", "<eos>", "o", "m"});
  VocabMapping m = overlap_map(a, b);
  std::set<int32_t> olds, news;
  for (const auto& [o, n] : m.pairs) {
    CHECK(olds.insert(o).second);
    CHECK(news.insert(n).second);
    CHECK(a.tokens[static_cast<size_t>(o)] == b.tokens[static_cast<size_t>(n)]);
  }
}
