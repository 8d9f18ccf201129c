#include "mtgrow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtgrow/model.hpp"

using namespace mtgrow;

namespace {

// ---- brute-force oracles ---------------------------------------------------
// Clipping is realized as greedy positional pairing: each hypothesis n-gram
// consumes at most one identical, not-yet-used reference n-gram. For equal
// grams this pairing count equals min(hyp_count, ref_count) summed over gram
// types, but the algorithm shares nothing with the count-map implementation.

std::vector<std::vector<std::string>> positions(const std::vector<std::string>& tokens, size_t n) {
  std::vector<std::vector<std::string>> out;
  if (tokens.size() < n) return out;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    out.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
  return out;
}

int64_t paired_matches(const std::vector<std::vector<std::string>>& hyp,
                       const std::vector<std::vector<std::string>>& ref) {
  std::vector<bool> used(ref.size(), false);
  int64_t matches = 0;
  for (const auto& gram : hyp)
    for (size_t j = 0; j < ref.size(); ++j)
      if (!used[j] && ref[j] == gram) {
        used[j] = true;
        ++matches;
        break;
      }
  return matches;
}

double oracle_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  int64_t hyp_len = 0, ref_len = 0;
  double p[4];
  int64_t match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < hyps.size(); ++i) {
    auto h = split_ws(hyps[i]), r = split_ws(refs[i]);
    hyp_len += static_cast<int64_t>(h.size());
    ref_len += static_cast<int64_t>(r.size());
    for (size_t n = 1; n <= 4; ++n) {
      auto hp = positions(h, n), rp = positions(r, n);
      match[n - 1] += paired_matches(hp, rp);
      total[n - 1] += static_cast<int64_t>(hp.size());
    }
  }
  if (hyp_len == 0) return 0.0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0 || match[n] == 0) return 0.0;
    p[n] = static_cast<double>(match[n]) / static_cast<double>(total[n]);
  }
  double gm = std::pow(p[0] * p[1] * p[2] * p[3], 0.25);
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * gm;
}

std::vector<std::string> char_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (char c : text)
    if (c != ' ' && c != '\t' && c != '\n') out.emplace_back(1, c);
  return out;
}

double oracle_chrfpp(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  double sum = 0.0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    double order_sum = 0.0;
    int64_t included = 0;
    auto one_order = [&](const std::vector<std::string>& h_units,
                         const std::vector<std::string>& r_units, size_t n) {
      auto hp = positions(h_units, n), rp = positions(r_units, n);
      if (hp.empty() && rp.empty()) return;
      ++included;
      double m = static_cast<double>(paired_matches(hp, rp));
      double prec = hp.empty() ? 0.0 : m / static_cast<double>(hp.size());
      double rec = rp.empty() ? 0.0 : m / static_cast<double>(rp.size());
      if (4.0 * prec + rec > 0.0) order_sum += 5.0 * prec * rec / (4.0 * prec + rec);
    };
    auto hc = char_tokens(hyps[i]), rc = char_tokens(refs[i]);
    auto hw = split_ws(hyps[i]), rw = split_ws(refs[i]);
    for (size_t n = 1; n <= 6; ++n) one_order(hc, rc, n);
    for (size_t n = 1; n <= 2; ++n) one_order(hw, rw, n);
    if (included == 0)
      sum += hyps[i] == refs[i] ? 1.0 : 0.0;
    else
      sum += order_sum / static_cast<double>(included);
  }
  return 100.0 * sum / static_cast<double>(hyps.size());
}

// random corpora over a tiny alphabet, heavy on collisions so clipping matters
std::pair<std::vector<std::string>, std::vector<std::string>> random_corpus(uint64_t seed) {
  GaussianStream gs(seed);
  const char* words[] = {"a", "b", "c", "ab", "ba"};
  auto sentence = [&](int64_t max_len) {
    int64_t len = static_cast<int64_t>(gs.next_u64() % static_cast<uint64_t>(max_len + 1));
    std::string out;
    for (int64_t k = 0; k < len; ++k) {
      if (k > 0) out += ' ';
      out += words[gs.next_u64() % 5];
    }
    return out;
  };
  int64_t n = 1 + static_cast<int64_t>(gs.next_u64() % 6);
  std::vector<std::string> hyps, refs;
  for (int64_t i = 0; i < n; ++i) {
    hyps.push_back(sentence(6));
    refs.push_back(sentence(6));
  }
  return {hyps, refs};
}

}  // namespace

TEST_CASE("bleu: identity corpus scores 100") {
  std::vector<std::string> sents = {"a b c d", "x y z w q", "one two three four five six"};
  CHECK(bleu(sents, sents) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("bleu: clipped counts match the spec's toy example") {
  // "a a a" vs "a b": clipped unigram 1/3, no bigram match -> 0
  CHECK(bleu({"a a a"}, {"a b"}) == 0.0);
  CHECK(oracle_bleu({"a a a"}, {"a b"}) == 0.0);
  // a longer pair where all four precisions are positive
  std::vector<std::string> hyp = {"a b c d e a b"};
  std::vector<std::string> ref = {"a b c d e f g"};
  CHECK(bleu(hyp, ref) == doctest::Approx(oracle_bleu(hyp, ref)).epsilon(1e-12));
  CHECK(bleu(hyp, ref) > 0.0);
  CHECK(bleu(hyp, ref) < 100.0);
}

TEST_CASE("bleu: empty hypothesis strings yield zero") {
  CHECK(bleu({""}, {"a b"}) == 0.0);
  CHECK(bleu({"", ""}, {"a", "b"}) == 0.0);
}

TEST_CASE("bleu: brevity penalty applies only when the hypothesis is shorter") {
  // hyp exactly matches a prefix; all precisions 1, pure BP effect
  std::vector<std::string> hyp = {"a b c d"};
  std::vector<std::string> ref = {"a b c d e f g h"};
  CHECK(bleu(hyp, ref) == doctest::Approx(100.0 * std::exp(1.0 - 8.0 / 4.0)).epsilon(1e-12));
  // longer hypothesis: no BP, precision drops instead
  std::vector<std::string> hyp2 = {"a b c d e f g h x"};
  std::vector<std::string> ref2 = {"a b c d e f g h"};
  CHECK(bleu(hyp2, ref2) == doctest::Approx(oracle_bleu(hyp2, ref2)).epsilon(1e-12));
}

TEST_CASE("bleu and chrfpp match brute-force oracles on 50 random corpora") {
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    auto [hyps, refs] = random_corpus(seed * 977);
    CAPTURE(seed);
    CHECK(std::abs(bleu(hyps, refs) - oracle_bleu(hyps, refs)) < 1e-9);
    CHECK(std::abs(chrfpp(hyps, refs) - oracle_chrfpp(hyps, refs)) < 1e-9);
    // identity scores 100 unless the corpus has no 4-grams at all, in which
    // case unsmoothed BLEU is 0 by definition
    bool has_4gram = false;
    for (const std::string& s : hyps) has_4gram = has_4gram || split_ws(s).size() >= 4;
    CHECK(std::abs(bleu(hyps, hyps) - (has_4gram ? 100.0 : 0.0)) < 1e-9);
    CHECK(std::abs(chrfpp(refs, refs) - 100.0) < 1e-9);
  }
}

TEST_CASE("chrfpp: identity, zero overlap, and the two-word toy pair") {
  std::vector<std::string> sents = {"ab cd", "efg"};
  CHECK(chrfpp(sents, sents) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(chrfpp({"xyz"}, {"abc"}) == 0.0);
  std::vector<std::string> hyp = {"ab cd"}, ref = {"ab ce"};
  CHECK(chrfpp(hyp, ref) == doctest::Approx(oracle_chrfpp(hyp, ref)).epsilon(1e-12));
  CHECK(chrfpp(hyp, ref) > 0.0);
  CHECK(chrfpp(hyp, ref) < 100.0);
}

TEST_CASE("metrics: permutation invariance over the corpus") {
  std::vector<std::string> hyps = {"a b", "c d e", "f", "g h i j"};
  std::vector<std::string> refs = {"a b", "c e d", "f f", "g h j i"};
  std::vector<std::string> hyps_p = {hyps[2], hyps[0], hyps[3], hyps[1]};
  std::vector<std::string> refs_p = {refs[2], refs[0], refs[3], refs[1]};
  CHECK(bleu(hyps, refs) == doctest::Approx(bleu(hyps_p, refs_p)).epsilon(1e-14));
  CHECK(chrfpp(hyps, refs) == doctest::Approx(chrfpp(hyps_p, refs_p)).epsilon(1e-14));
}

TEST_CASE("metrics: shape and emptiness errors") {
  CHECK_THROWS_AS((void)bleu({"a"}, {}), Error);
  CHECK_THROWS_AS((void)bleu({}, {}), Error);
  CHECK_THROWS_AS((void)chrfpp({}, {}), Error);
  CHECK_THROWS_AS((void)chrfpp({"a", "b"}, {"a"}), Error);
}

TEST_CASE("eval report: aggregates are exact unweighted means") {
  EvalReport r;
  auto mk = [](const char* key, Tier tier, bool added, double b, double c) {
    DirectionScore d;
    d.key = key;
    d.tier = tier;
    d.added = added;
    d.bleu = b;
    d.chrfpp = c;
    return d;
  };
  r.directions = {mk("eng-aaa", Tier::High, false, 40.0, 60.0),
                  mk("aaa-eng", Tier::High, false, 20.0, 30.0),
                  mk("eng-zzz", Tier::Low, true, 10.0, 16.0)};
  finalize_aggregates(r);
  CHECK(r.bleu_all == doctest::Approx((40.0 + 20.0 + 10.0) / 3.0).epsilon(1e-15));
  CHECK(r.bleu_orig == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(r.bleu_added == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(r.chrf_orig == doctest::Approx(45.0).epsilon(1e-15));
  CHECK(r.n_orig == 2);
  CHECK(r.n_added == 1);
  CHECK(r.tier_bleu.at("high") == doctest::Approx(30.0).epsilon(1e-15));
  CHECK(r.tier_bleu.at("low") == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(r.tier_bleu.count("mid") == 0);
}

TEST_CASE("eval report: json round trip preserves every double bitwise") {
  EvalReport r;
  DirectionScore d;
  d.key = "eng-xxx";
  d.src_lang = "eng";
  d.tgt_lang = "xxx";
  d.tier = Tier::VLow;
  d.added = true;
  d.bleu = 37.123456789012345;
  d.chrfpp = 0.1 + 0.2;  // deliberately non-representable sum
  r.directions = {d};
  finalize_aggregates(r);
  r.step = 1234;
  r.checkpoint_id = "ckpt_0007";
  EvalReport back = eval_report_from_json(eval_report_to_json(r));
  CHECK(eval_report_to_json(back) == eval_report_to_json(r));
  CHECK(back.directions[0].bleu == r.directions[0].bleu);
  CHECK(back.directions[0].chrfpp == r.directions[0].chrfpp);
  CHECK(back.bleu_added == r.bleu_added);
  CHECK(back.step == 1234);
  std::string csv = eval_report_csv(r);
  CHECK(csv.find("eng-xxx") != std::string::npos);
  CHECK(csv.find("TIER_v_low") != std::string::npos);
}

TEST_CASE("evaluate: smoke run on an untrained model, flags and errors") {
  LanguageSpec xs;
  xs.language = "xxx";
  xs.script = "latn";
  xs.cipher_seed = 5;
  xs.tier = Tier::Low;
  auto [fwd, rev] = gen_corpus(xs, 3, 7, 16);

  auto counts = corpus_counts({fwd, rev});
  Vocab vocab = build_vocab(counts, 40, 1.0);
  ModelConfig cfg;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.model_dim = 8;
  cfg.ffn_hidden_dim = 16;
  cfg.heads = 2;
  cfg.vocab_size = vocab.size();
  cfg.max_positions = 32;
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.vocab = vocab;
  ckpt.params = init_model(cfg, 3);

  EvalReport report = evaluate(ckpt, {fwd, rev}, {"xxx"}, 2, 20);
  REQUIRE(report.directions.size() == 2);
  CHECK(report.directions[0].key == "eng-xxx");
  CHECK(report.directions[0].added);
  CHECK(report.directions[1].key == "xxx-eng");
  CHECK(report.n_added == 2);
  CHECK(report.n_orig == 0);
  for (const DirectionScore& d : report.directions) {
    CHECK(d.bleu >= 0.0);
    CHECK(d.bleu <= 100.0);
    CHECK(d.chrfpp >= 0.0);
    CHECK(d.chrfpp <= 100.0);
  }

  DirectionSpec alien;
  alien.src_lang = "eng";
  alien.tgt_lang = "nope";
  alien.pairs = {{"eng_1", "zz_1"}};
  CHECK_THROWS_AS((void)evaluate(ckpt, {alien}, {}), Error);
}
