#include "mtgrow/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "mtgrow/decode.hpp"

namespace mtgrow {

using nlohmann::json;

namespace {

void check_corpus(const std::vector<std::string>& hypotheses,
                  const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    fail(ErrorKind::Shape, "metric inputs differ in length: " +
                               std::to_string(hypotheses.size()) + " vs " +
                               std::to_string(references.size()));
  if (hypotheses.empty()) fail(ErrorKind::Domain, "metric called on an empty corpus");
}

// joined word n-grams, '\x1f' never appears in whitespace tokens
std::map<std::string, int64_t> word_ngrams(const std::vector<std::string>& tokens, size_t n) {
  std::map<std::string, int64_t> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    counts[key] += 1;
  }
  return counts;
}

std::map<std::string, int64_t> char_ngrams(const std::string& text, size_t n) {
  std::map<std::string, int64_t> counts;
  if (text.size() < n) return counts;
  for (size_t i = 0; i + n <= text.size(); ++i) counts[text.substr(i, n)] += 1;
  return counts;
}

int64_t total_count(const std::map<std::string, int64_t>& counts) {
  int64_t n = 0;
  for (const auto& [gram, c] : counts) {
    (void)gram;
    n += c;
  }
  return n;
}

int64_t clipped_matches(const std::map<std::string, int64_t>& hyp,
                        const std::map<std::string, int64_t>& ref) {
  int64_t n = 0;
  for (const auto& [gram, c] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) n += std::min(c, it->second);
  }
  return n;
}

std::string strip_whitespace(const std::string& text) {
  std::string out;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references) {
  check_corpus(hypotheses, references);
  int64_t hyp_len = 0, ref_len = 0;
  int64_t matches[4] = {0, 0, 0, 0};
  int64_t totals[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<std::string> hyp = split_ws(hypotheses[i]);
    std::vector<std::string> ref = split_ws(references[i]);
    hyp_len += static_cast<int64_t>(hyp.size());
    ref_len += static_cast<int64_t>(ref.size());
    for (size_t n = 1; n <= 4; ++n) {
      auto hc = word_ngrams(hyp, n);
      matches[n - 1] += clipped_matches(hc, word_ngrams(ref, n));
      totals[n - 1] += total_count(hc);
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double chrfpp(const std::vector<std::string>& hypotheses,
              const std::vector<std::string>& references) {
  check_corpus(hypotheses, references);
  double segment_sum = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::string hyp_chars = strip_whitespace(hypotheses[i]);
    std::string ref_chars = strip_whitespace(references[i]);
    std::vector<std::string> hyp_words = split_ws(hypotheses[i]);
    std::vector<std::string> ref_words = split_ws(references[i]);

    double order_sum = 0.0;
    int64_t included = 0;
    auto add_order = [&](const std::map<std::string, int64_t>& hc,
                         const std::map<std::string, int64_t>& rc) {
      int64_t hyp_total = total_count(hc), ref_total = total_count(rc);
      if (hyp_total + ref_total == 0) return;  // order absent from both sides
      ++included;
      double m = static_cast<double>(clipped_matches(hc, rc));
      double p = hyp_total > 0 ? m / static_cast<double>(hyp_total) : 0.0;
      double r = ref_total > 0 ? m / static_cast<double>(ref_total) : 0.0;
      if (4.0 * p + r > 0.0) order_sum += 5.0 * p * r / (4.0 * p + r);
    };
    for (size_t n = 1; n <= 6; ++n) add_order(char_ngrams(hyp_chars, n), char_ngrams(ref_chars, n));
    for (size_t n = 1; n <= 2; ++n) add_order(word_ngrams(hyp_words, n), word_ngrams(ref_words, n));

    if (included == 0)
      segment_sum += hypotheses[i] == references[i] ? 1.0 : 0.0;
    else
      segment_sum += order_sum / static_cast<double>(included);
  }
  return 100.0 * segment_sum / static_cast<double>(hypotheses.size());
}

void finalize_aggregates(EvalReport& report) {
  report.bleu_all = report.chrf_all = 0.0;
  report.bleu_orig = report.chrf_orig = 0.0;
  report.bleu_added = report.chrf_added = 0.0;
  report.n_orig = report.n_added = 0;
  report.tier_bleu.clear();
  report.tier_chrf.clear();
  std::map<std::string, int64_t> tier_n;
  for (const DirectionScore& d : report.directions) {
    report.bleu_all += d.bleu;
    report.chrf_all += d.chrfpp;
    if (d.added) {
      report.bleu_added += d.bleu;
      report.chrf_added += d.chrfpp;
      report.n_added += 1;
    } else {
      report.bleu_orig += d.bleu;
      report.chrf_orig += d.chrfpp;
      report.n_orig += 1;
    }
    std::string tier = to_string(d.tier);
    report.tier_bleu[tier] += d.bleu;
    report.tier_chrf[tier] += d.chrfpp;
    tier_n[tier] += 1;
  }
  int64_t n = static_cast<int64_t>(report.directions.size());
  if (n > 0) {
    report.bleu_all /= static_cast<double>(n);
    report.chrf_all /= static_cast<double>(n);
  }
  if (report.n_orig > 0) {
    report.bleu_orig /= static_cast<double>(report.n_orig);
    report.chrf_orig /= static_cast<double>(report.n_orig);
  }
  if (report.n_added > 0) {
    report.bleu_added /= static_cast<double>(report.n_added);
    report.chrf_added /= static_cast<double>(report.n_added);
  }
  for (auto& [tier, v] : report.tier_bleu) v /= static_cast<double>(tier_n.at(tier));
  for (auto& [tier, v] : report.tier_chrf) v /= static_cast<double>(tier_n.at(tier));
}

json eval_report_to_json(const EvalReport& report) {
  json dirs = json::array();
  for (const DirectionScore& d : report.directions)
    dirs.push_back({{"key", d.key},
                    {"src_lang", d.src_lang},
                    {"tgt_lang", d.tgt_lang},
                    {"tier", to_string(d.tier)},
                    {"added", d.added},
                    {"bleu", d.bleu},
                    {"chrfpp", d.chrfpp}});
  return json{{"directions", dirs},
              {"bleu", {{"all", report.bleu_all}, {"orig", report.bleu_orig}, {"added", report.bleu_added}}},
              {"chrfpp", {{"all", report.chrf_all}, {"orig", report.chrf_orig}, {"added", report.chrf_added}}},
              {"n_orig", report.n_orig},
              {"n_added", report.n_added},
              {"tier_bleu", report.tier_bleu},
              {"tier_chrfpp", report.tier_chrf},
              {"step", report.step},
              {"checkpoint_id", report.checkpoint_id}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    for (const json& d : j.at("directions")) {
      DirectionScore s;
      s.key = d.at("key").get<std::string>();
      s.src_lang = d.at("src_lang").get<std::string>();
      s.tgt_lang = d.at("tgt_lang").get<std::string>();
      s.tier = tier_from_string(d.at("tier").get<std::string>());
      s.added = d.at("added").get<bool>();
      s.bleu = d.at("bleu").get<double>();
      s.chrfpp = d.at("chrfpp").get<double>();
      r.directions.push_back(std::move(s));
    }
    r.bleu_all = j.at("bleu").at("all").get<double>();
    r.bleu_orig = j.at("bleu").at("orig").get<double>();
    r.bleu_added = j.at("bleu").at("added").get<double>();
    r.chrf_all = j.at("chrfpp").at("all").get<double>();
    r.chrf_orig = j.at("chrfpp").at("orig").get<double>();
    r.chrf_added = j.at("chrfpp").at("added").get<double>();
    r.n_orig = j.at("n_orig").get<int64_t>();
    r.n_added = j.at("n_added").get<int64_t>();
    r.tier_bleu = j.at("tier_bleu").get<std::map<std::string, double>>();
    r.tier_chrf = j.at("tier_chrfpp").get<std::map<std::string, double>>();
    r.step = j.at("step").get<int64_t>();
    r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Manifest, std::string("bad eval report: ") + e.what());
  }
  return r;
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "direction,src_lang,tgt_lang,tier,added,bleu,chrfpp\n";
  out.precision(17);
  for (const DirectionScore& d : report.directions)
    out << d.key << ',' << d.src_lang << ',' << d.tgt_lang << ',' << to_string(d.tier) << ','
        << (d.added ? 1 : 0) << ',' << d.bleu << ',' << d.chrfpp << '\n';
  out << "ALL,,,,," << report.bleu_all << ',' << report.chrf_all << '\n';
  out << "ORIG,,,,," << report.bleu_orig << ',' << report.chrf_orig << '\n';
  out << "ADDED,,,,," << report.bleu_added << ',' << report.chrf_added << '\n';
  for (const auto& [tier, v] : report.tier_bleu)
    out << "TIER_" << tier << ",,,,," << v << ',' << report.tier_chrf.at(tier) << '\n';
  return out.str();
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<DirectionSpec>& directions,
                    const std::set<std::string>& added_languages, int64_t beam, int64_t max_len,
                    double length_penalty) {
  if (max_len <= 0) max_len = ckpt.config.max_positions - 2;  // room for <bos> + tag
  EvalReport report;
  report.step = ckpt.step;

  for (const DirectionSpec& dir : directions) {
    for (const std::string& lang : {dir.src_lang, dir.tgt_lang})
      if (!ckpt.vocab.contains(tag_token(lang)))
        fail(ErrorKind::Vocab, "language tag for '" + lang + "' missing from the vocabulary");

    std::vector<std::string> hyps, refs;
    hyps.reserve(dir.pairs.size());
    refs.reserve(dir.pairs.size());
    int32_t tag = ckpt.vocab.tag_id(dir.tgt_lang);
    for (const auto& [src_text, tgt_text] : dir.pairs) {
      std::vector<int32_t> src = encode(ckpt.vocab, dir.src_lang, src_text);
      std::vector<int32_t> out =
          decode_beam(ckpt.params, ckpt.config, src, {tag}, beam, max_len, length_penalty);
      hyps.push_back(decode(ckpt.vocab, out));
      refs.push_back(tgt_text);
    }

    DirectionScore score;
    score.key = direction_key(dir.src_lang, dir.tgt_lang);
    score.src_lang = dir.src_lang;
    score.tgt_lang = dir.tgt_lang;
    score.tier = dir.tier;
    score.added = added_languages.count(dir.src_lang) != 0 ||
                  added_languages.count(dir.tgt_lang) != 0;
    score.bleu = bleu(hyps, refs);
    score.chrfpp = chrfpp(hyps, refs);
    report.directions.push_back(std::move(score));
  }
  finalize_aggregates(report);
  return report;
}

}  // namespace mtgrow
