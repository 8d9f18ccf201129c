#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtgrow/checkpoint.hpp"
#include "mtgrow/synth_data.hpp"

namespace mtgrow {

// Corpus BLEU over whitespace tokens: clipped n-gram precisions for n=1..4,
// unsmoothed geometric mean (any zero precision zeroes the score), brevity
// penalty exp(1 - ref/hyp) when the hypothesis side is shorter.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references);

// chrF++: per-segment F_{beta=2} for character n-grams 1..6 (whitespace
// stripped) plus word n-grams 1..2, averaged over the orders present in
// either side, then macro-averaged over segments.
double chrfpp(const std::vector<std::string>& hypotheses,
              const std::vector<std::string>& references);

struct DirectionScore {
  std::string key;  // "src-tgt"
  std::string src_lang;
  std::string tgt_lang;
  Tier tier = Tier::Low;
  bool added = false;
  double bleu = 0.0;
  double chrfpp = 0.0;
};

struct EvalReport {
  std::vector<DirectionScore> directions;
  double bleu_all = 0.0, chrf_all = 0.0;
  double bleu_orig = 0.0, chrf_orig = 0.0;    // 0 when n_orig == 0
  double bleu_added = 0.0, chrf_added = 0.0;  // 0 when n_added == 0
  int64_t n_orig = 0, n_added = 0;
  std::map<std::string, double> tier_bleu;  // keyed by tier name, members only
  std::map<std::string, double> tier_chrf;
  int64_t step = 0;
  std::string checkpoint_id;
};

// Recompute every aggregate as the unweighted mean of its member directions.
void finalize_aggregates(EvalReport& report);

nlohmann::json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string eval_report_csv(const EvalReport& report);

// Beam-decode every source sentence and score against the references.
// Directions touching a language in added_languages report as Added.
// max_len 0 derives the longest target the position table allows.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<DirectionSpec>& directions,
                    const std::set<std::string>& added_languages, int64_t beam = 4,
                    int64_t max_len = 0, double length_penalty = 1.0);

}  // namespace mtgrow
