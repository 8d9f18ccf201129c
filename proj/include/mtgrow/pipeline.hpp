#pragma once

#include <string>

#include "mtgrow/manifest.hpp"
#include "mtgrow/metrics.hpp"
#include "mtgrow/probes.hpp"

#include "json.hpp"

namespace mtgrow {

// Bumped whenever an artifact format or a stage's numeric behaviour changes;
// recorded in every provenance stamp.
inline constexpr const char* kCodeVersion = "mtgrow-1";

// Every stage writes its outputs plus stamp.json into <workdir>/<stage>/ and
// refuses upstream artifacts whose stamp carries a different manifest hash.
// Stages are idempotent: rerunning one rewrites byte-identical files.
//
//   data/          train|val|test.<src>-<tgt>.tsv, seed_vocab.json, full_vocab.json
//   seed/          seed.ckpt, train_log.csv
//   grow/          grown.ckpt, surgery_report.json
//   continual/     continual.ckpt (best), last.ckpt, train_log.csv
//   eval/<target>/ report.json, report.csv
//   probe_forget/  report.json, report.csv
//   norms/         drift.json, drift.csv
//   fisher/        summary.json, groups.json
//   report/        compare.json, compare.csv

void stage_gen_data(const ExperimentManifest& m, const std::string& workdir);
void stage_train_seed(const ExperimentManifest& m, const std::string& workdir);
void stage_grow(const ExperimentManifest& m, const std::string& workdir);
void stage_train_continual(const ExperimentManifest& m, const std::string& workdir);

// target is "seed" (old test directions, nothing marked added), "grown" or
// "continual" (all test directions, new languages marked added).
EvalReport stage_evaluate(const ExperimentManifest& m, const std::string& workdir,
                          const std::string& target);

// Forgetting probe: continual embeddings substituted into the seed model via
// the vocab overlap, scored on the old test directions against the seed
// model's own scores from eval/seed.
nlohmann::json stage_probe_forget(const ExperimentManifest& m, const std::string& workdir);

// Drift of the widened FFN halves, measured between the seed checkpoint and
// the final (last, not best) continual checkpoint.
NormDriftReport stage_analyze_norms(const ExperimentManifest& m, const std::string& workdir);

// Per-token Fisher on the grown checkpoint over old-direction val pairs;
// writes per-tensor summaries plus the threshold-derived parameter groups.
nlohmann::json stage_fisher(const ExperimentManifest& m, const std::string& workdir);

// All/Orig/Added comparison of eval/seed vs eval/continual.
nlohmann::json stage_report(const ExperimentManifest& m, const std::string& workdir);

// The full pipeline in order: gen-data, train-seed, grow, train-continual,
// evaluate seed + continual, probe-forget, analyze-norms, fisher, report.
void run_all(const ExperimentManifest& m, const std::string& workdir);

// Pure form of the comparison table (rows All/Orig/Added x BLEU/chrF++).
nlohmann::json report_compare(const EvalReport& baseline, const EvalReport& continual);
std::string compare_csv(const nlohmann::json& compare);

}  // namespace mtgrow
