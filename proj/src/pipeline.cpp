#include "mtgrow/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mtgrow/common.hpp"
#include "mtgrow/model.hpp"
#include "mtgrow/trainer.hpp"
#include "mtgrow/vocab.hpp"

namespace mtgrow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Tracks what one stage reads and writes so its provenance stamp can pin the
// exact inputs (by content hash), the manifest, and the code version. Reading
// upstream files through here is what makes cross-manifest mixing detectable.
class Stage {
 public:
  Stage(const ExperimentManifest& m, const std::string& workdir, std::string stage)
      : manifest_hash_(hex64(manifest_hash(m))),
        master_seed_(m.master_seed),
        workdir_(workdir),
        stage_(std::move(stage)) {
    std::error_code ec;
    fs::create_directories(fs::path(workdir_) / stage_, ec);
    if (ec)
      fail(ErrorKind::Io, "cannot create stage directory '" + (fs::path(workdir_) / stage_).string() +
                              "': " + ec.message());
  }

  // Verify an upstream stage ran under this manifest; its stamp becomes an input.
  void depends_on(const std::string& upstream) {
    std::string rel = upstream + "/stamp.json";
    std::string path = (fs::path(workdir_) / rel).string();
    if (!file_exists(path))
      fail(ErrorKind::StageDependency,
           "stage '" + stage_ + "' needs '" + upstream + "', which has not run (no " + rel + ")");
    std::string raw = read_file(path);
    json stamp = json::parse(raw, nullptr, false);
    if (stamp.is_discarded() || !stamp.contains("manifest_hash") || !stamp.contains("code_version"))
      fail(ErrorKind::StageDependency, rel + ": not a valid provenance stamp");
    if (stamp["manifest_hash"] != manifest_hash_)
      fail(ErrorKind::StageDependency,
           "'" + upstream + "' was produced by a different manifest (stamp " +
               stamp["manifest_hash"].get<std::string>() + ", expected " + manifest_hash_ + ")");
    if (stamp["code_version"] != kCodeVersion)
      fail(ErrorKind::StageDependency,
           "'" + upstream + "' was produced by code version " +
               stamp["code_version"].get<std::string>() + "; rerun it with " + kCodeVersion);
    inputs_[rel] = hex64(fnv1a(raw));
  }

  // Absolute path of a workdir-relative input file, recorded by content hash.
  std::string input_path(const std::string& rel) {
    std::string path = (fs::path(workdir_) / rel).string();
    if (!file_exists(path))
      fail(ErrorKind::StageDependency, "missing upstream artifact '" + rel + "'");
    inputs_[rel] = hex64(fnv1a(read_file(path)));
    return path;
  }

  json input_json(const std::string& rel) {
    json j = json::parse(read_file(input_path(rel)), nullptr, false);
    if (j.is_discarded())
      fail(ErrorKind::StageDependency, "upstream artifact '" + rel + "' is not valid JSON");
    return j;
  }

  std::string output_path(const std::string& filename) const {
    return (fs::path(workdir_) / stage_ / filename).string();
  }

  void write_output(const std::string& filename, const std::string& content) {
    write_file(output_path(filename), content);
    outputs_[filename] = hex64(fnv1a(content));
  }

  // For files written by other serializers (checkpoints); hashes them back in.
  void record_output(const std::string& filename) {
    outputs_[filename] = hex64(fnv1a(read_file(output_path(filename))));
  }

  void finish() {
    json stamp{{"code_version", kCodeVersion},
               {"manifest_hash", manifest_hash_},
               {"master_seed", master_seed_},
               {"inputs", inputs_},
               {"outputs", outputs_}};
    write_file(output_path("stamp.json"), stamp.dump(2) + "\n");
  }

 private:
  std::string manifest_hash_;
  uint64_t master_seed_;
  std::string workdir_;
  std::string stage_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

const LanguageSpec& spec_for(const ExperimentManifest& m, const std::string& lang) {
  for (const LanguageSpec& spec : m.data.languages)
    if (spec.language == lang) return spec;
  fail(ErrorKind::Domain, "language '" + lang + "' is not declared in the manifest");
}

// eng->L then L->eng for each language, manifest order. alpha may be null
// (evaluation splits have no sampling weights).
std::vector<DirectionSpec> load_split(Stage& st, const ExperimentManifest& m,
                                      const std::string& split,
                                      const std::vector<std::string>& langs,
                                      const std::map<std::string, double>* alpha) {
  std::vector<DirectionSpec> dirs;
  for (const std::string& lang : langs) {
    const LanguageSpec& spec = spec_for(m, lang);
    for (bool from_eng : {true, false}) {
      DirectionSpec d;
      d.src_lang = from_eng ? kEngLanguage : lang;
      d.tgt_lang = from_eng ? lang : kEngLanguage;
      d.tier = spec.tier;
      std::string key = direction_key(d.src_lang, d.tgt_lang);
      d.pairs = load_pairs(st.input_path("data/" + split + "." + key + ".tsv"));
      if (alpha) {
        auto it = alpha->find(key);
        d.alpha = it == alpha->end() ? 1.0 : it->second;
      }
      dirs.push_back(std::move(d));
    }
  }
  return dirs;
}

std::vector<std::string> all_languages(const ExperimentManifest& m) {
  std::vector<std::string> langs = m.old_languages;
  langs.insert(langs.end(), m.new_languages.begin(), m.new_languages.end());
  return langs;
}

Vocab vocab_from_file(Stage& st, const std::string& rel) {
  json j = st.input_json(rel);
  if (!j.contains("tokens") || !j["tokens"].is_array())
    fail(ErrorKind::StageDependency, "upstream artifact '" + rel + "' has no token list");
  return Vocab::from_tokens(j["tokens"].get<std::vector<std::string>>());
}

Example encode_pair(const Vocab& vocab, const std::string& src_lang, const std::string& tgt_lang,
                    const std::string& src_text, const std::string& tgt_text) {
  Example ex;
  ex.src = encode(vocab, src_lang, src_text);
  ex.tgt_out = encode(vocab, tgt_lang, tgt_text);
  ex.tgt_in.reserve(ex.tgt_out.size());
  ex.tgt_in.push_back(kBosId);
  ex.tgt_in.insert(ex.tgt_in.end(), ex.tgt_out.begin(), ex.tgt_out.end() - 1);
  return ex;
}

// The grown architecture random_init_all must match what grow() would build.
ModelConfig grown_config(const ModelConfig& seed_cfg, const GrowthPlan& plan, int64_t vocab_size) {
  ModelConfig cfg = seed_cfg;
  cfg.vocab_size = vocab_size;
  cfg.ffn_hidden_dim *= plan.width.factor;
  cfg.enc_layers += plan.depth.enc_count;
  cfg.dec_layers += plan.depth.dec_count;
  return cfg;
}

TrainConfig phase_config(const TrainConfig& base, uint64_t master_seed, const char* purpose) {
  TrainConfig tc = base;
  tc.seed = mix_seed(master_seed, fnv1a(purpose));
  return tc;
}

ParamGroup group_from_schedule(const char* name, const GammaSchedule& g) {
  return ParamGroup{name, g.start, g.end, g.ramp_steps};
}

}  // namespace

void stage_gen_data(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "data");

  int64_t n_eval = m.data.val_pairs + m.data.test_pairs;
  std::vector<DirectionSpec> old_train, all_train;
  std::set<std::string> old_set(m.old_languages.begin(), m.old_languages.end());

  for (const LanguageSpec& spec : m.data.languages) {
    int64_t n_train = tier_size(spec.tier, m.data.corpus_scale);
    uint64_t seed = mix_seed(m.master_seed, fnv1a("data:" + spec.language));
    auto [fwd, rev] = gen_corpus(spec, n_train + n_eval, seed, m.data.lexicon_size);

    for (const DirectionSpec* dir : {&fwd, &rev}) {
      std::string key = direction_key(dir->src_lang, dir->tgt_lang);
      auto begin = dir->pairs.begin();
      std::vector<std::pair<std::string, std::string>> train(begin, begin + n_train);
      std::vector<std::pair<std::string, std::string>> val(begin + n_train,
                                                           begin + n_train + m.data.val_pairs);
      std::vector<std::pair<std::string, std::string>> test(begin + n_train + m.data.val_pairs,
                                                            dir->pairs.end());
      save_pairs(st.output_path("train." + key + ".tsv"), train);
      save_pairs(st.output_path("val." + key + ".tsv"), val);
      save_pairs(st.output_path("test." + key + ".tsv"), test);
      st.record_output("train." + key + ".tsv");
      st.record_output("val." + key + ".tsv");
      st.record_output("test." + key + ".tsv");

      DirectionSpec train_dir = *dir;
      train_dir.pairs = std::move(train);
      if (old_set.count(spec.language)) old_train.push_back(train_dir);
      all_train.push_back(std::move(train_dir));
    }
  }

  Vocab seed_vocab =
      build_vocab(corpus_counts(old_train), m.vocab.seed_size, m.vocab.temperature);
  Vocab full_vocab = build_vocab(corpus_counts(all_train), m.vocab.grown_size, m.vocab.temperature);
  st.write_output("seed_vocab.json", json{{"tokens", seed_vocab.tokens}}.dump(2) + "\n");
  st.write_output("full_vocab.json", json{{"tokens", full_vocab.tokens}}.dump(2) + "\n");
  st.finish();
}

void stage_train_seed(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "seed");
  st.depends_on("data");

  Vocab vocab = vocab_from_file(st, "data/seed_vocab.json");
  Checkpoint start;
  start.config = m.model;
  start.config.vocab_size = vocab.size();
  start.vocab = vocab;
  start.params = init_model(start.config, mix_seed(m.master_seed, fnv1a("init-seed")));
  start.step = 0;

  TrainConfig tc = phase_config(m.seed_phase, m.master_seed, "train-seed");
  std::vector<DirectionSpec> train_dirs = load_split(st, m, "train", m.old_languages, &tc.alpha);
  std::vector<DirectionSpec> val_dirs = load_split(st, m, "val", m.old_languages, nullptr);

  TrainResult r = train(start, train_dirs, val_dirs, tc, single_group(start.params));
  save_checkpoint(r.best, st.output_path("seed.ckpt"));
  st.record_output("seed.ckpt");
  st.write_output("train_log.csv", r.log_csv);
  st.finish();
}

void stage_grow(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "grow");
  st.depends_on("data");
  st.depends_on("seed");

  Checkpoint seed = load_checkpoint(st.input_path("seed/seed.ckpt"));
  Vocab full_vocab = vocab_from_file(st, "data/full_vocab.json");

  Checkpoint grown;
  SurgeryReport report;
  if (m.random_init_all) {
    // same architecture and step as the grown model, but nothing carried over
    grown.config = grown_config(seed.config, m.growth, full_vocab.size());
    grown.vocab = full_vocab;
    grown.params = init_model(grown.config, mix_seed(m.master_seed, fnv1a("random-init-all")));
    grown.step = seed.step;
    report.overlap_coverage = 0.0;
    report.choices["random_init_all"] = "true";
    for (const auto& [name, t] : grown.params) {
      ElementRuns runs;
      runs.append(Provenance::FreshRandom, true, t.numel());
      report.tensors[name] = std::move(runs);
      report.source_name[name] = "";
    }
  } else {
    GrowthPlan plan = m.growth;
    plan.target_vocab = full_vocab;
    plan.seed = mix_seed(m.master_seed, fnv1a("grow"));
    std::tie(grown, report) = grow(seed, plan);
  }

  save_checkpoint(grown, st.output_path("grown.ckpt"));
  st.record_output("grown.ckpt");
  st.write_output("surgery_report.json", report_to_json(report).dump(2) + "\n");
  st.finish();
}

void stage_train_continual(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "continual");
  st.depends_on("data");
  st.depends_on("grow");

  Checkpoint grown = load_checkpoint(st.input_path("grow/grown.ckpt"));
  SurgeryReport report = report_from_json(st.input_json("grow/surgery_report.json"));
  GroupSet groups = old_new_groups(grown.params, report, group_from_schedule("old", m.gamma_old),
                                   group_from_schedule("new", m.gamma_new));

  TrainConfig tc = phase_config(m.continual_phase, m.master_seed, "train-continual");
  std::vector<std::string> langs = all_languages(m);
  std::vector<DirectionSpec> train_dirs = load_split(st, m, "train", langs, &tc.alpha);
  std::vector<DirectionSpec> val_dirs = load_split(st, m, "val", langs, nullptr);

  TrainResult r = train(grown, train_dirs, val_dirs, tc, groups);
  save_checkpoint(r.best, st.output_path("continual.ckpt"));
  save_checkpoint(r.last, st.output_path("last.ckpt"));
  st.record_output("continual.ckpt");
  st.record_output("last.ckpt");
  st.write_output("train_log.csv", r.log_csv);
  st.finish();
}

EvalReport stage_evaluate(const ExperimentManifest& m, const std::string& workdir,
                          const std::string& target) {
  std::string upstream, ckpt_rel;
  std::vector<std::string> langs;
  std::set<std::string> added;
  if (target == "seed") {
    upstream = "seed";
    ckpt_rel = "seed/seed.ckpt";
    langs = m.old_languages;
  } else if (target == "grown" || target == "continual") {
    upstream = target == "grown" ? "grow" : "continual";
    ckpt_rel = target == "grown" ? "grow/grown.ckpt" : "continual/continual.ckpt";
    langs = all_languages(m);
    added.insert(m.new_languages.begin(), m.new_languages.end());
  } else {
    fail(ErrorKind::Domain, "evaluate: unknown target '" + target + "' (seed|grown|continual)");
  }

  Stage st(m, workdir, "eval/" + target);
  st.depends_on("data");
  st.depends_on(upstream);

  Checkpoint ckpt = load_checkpoint(st.input_path(ckpt_rel));
  std::vector<DirectionSpec> dirs = load_split(st, m, "test", langs, nullptr);
  EvalReport report =
      evaluate(ckpt, dirs, added, m.eval.beam, m.eval.max_len, m.eval.length_penalty);
  report.step = ckpt.step;
  report.checkpoint_id = target;

  st.write_output("report.json", eval_report_to_json(report).dump(2) + "\n");
  st.write_output("report.csv", eval_report_csv(report));
  st.finish();
  return report;
}

nlohmann::json stage_probe_forget(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "probe_forget");
  st.depends_on("data");
  st.depends_on("seed");
  st.depends_on("continual");
  st.depends_on("eval/seed");

  Checkpoint seed = load_checkpoint(st.input_path("seed/seed.ckpt"));
  Checkpoint continual = load_checkpoint(st.input_path("continual/continual.ckpt"));
  EvalReport baseline = eval_report_from_json(st.input_json("eval/seed/report.json"));

  VocabMapping mapping = overlap_map(seed.vocab, continual.vocab);
  Checkpoint substituted = substitute_embeddings(seed, continual, mapping);

  std::vector<DirectionSpec> dirs = load_split(st, m, "test", m.old_languages, nullptr);
  EvalReport probed = evaluate(substituted, dirs, {}, m.eval.beam, m.eval.max_len,
                               m.eval.length_penalty);

  std::map<std::string, const DirectionScore*> by_key;
  for (const DirectionScore& s : baseline.directions) by_key[s.key] = &s;

  json rows = json::array();
  std::map<std::string, std::pair<double, int64_t>> tier_drop;
  double total_drop = 0.0;
  for (const DirectionScore& s : probed.directions) {
    auto it = by_key.find(s.key);
    if (it == by_key.end())
      fail(ErrorKind::StageDependency,
           "eval/seed report has no direction '" + s.key + "' to compare against");
    double drop = it->second->bleu - s.bleu;
    rows.push_back({{"key", s.key},
                    {"tier", to_string(s.tier)},
                    {"seed_bleu", it->second->bleu},
                    {"substituted_bleu", s.bleu},
                    {"drop", drop}});
    auto& acc = tier_drop[to_string(s.tier)];
    acc.first += drop;
    ++acc.second;
    total_drop += drop;
  }
  if (probed.directions.empty()) fail(ErrorKind::Domain, "probe has no directions to score");

  json tier_mean = json::object();
  for (const auto& [tier, acc] : tier_drop)
    tier_mean[tier] = acc.first / static_cast<double>(acc.second);
  json out{{"coverage", mapping.coverage},
           {"directions", rows},
           {"tier_mean_drop", tier_mean},
           {"mean_drop", total_drop / static_cast<double>(probed.directions.size())}};

  std::string csv = "key,tier,seed_bleu,substituted_bleu,drop\n";
  for (const auto& row : rows)
    csv += row["key"].get<std::string>() + "," + row["tier"].get<std::string>() + "," +
           fmt_double(row["seed_bleu"].get<double>()) + "," +
           fmt_double(row["substituted_bleu"].get<double>()) + "," +
           fmt_double(row["drop"].get<double>()) + "\n";

  st.write_output("report.json", out.dump(2) + "\n");
  st.write_output("report.csv", csv);
  st.finish();
  return out;
}

NormDriftReport stage_analyze_norms(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "norms");
  st.depends_on("seed");
  st.depends_on("grow");
  st.depends_on("continual");

  Checkpoint seed = load_checkpoint(st.input_path("seed/seed.ckpt"));
  // drift is about where training ends up, so the last checkpoint, not best
  Checkpoint last = load_checkpoint(st.input_path("continual/last.ckpt"));
  SurgeryReport report = report_from_json(st.input_json("grow/surgery_report.json"));

  NormDriftReport drift = norm_drift(seed, last, report);
  st.write_output("drift.json", drift.to_json().dump(2) + "\n");
  st.write_output("drift.csv", drift.to_csv());
  st.finish();
  return drift;
}

nlohmann::json stage_fisher(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "fisher");
  st.depends_on("data");
  st.depends_on("grow");

  Checkpoint grown = load_checkpoint(st.input_path("grow/grown.ckpt"));
  std::vector<DirectionSpec> dirs = load_split(st, m, "val", m.old_languages, nullptr);

  std::vector<std::vector<Example>> batches;
  for (const DirectionSpec& dir : dirs) {
    std::vector<Example> batch;
    int64_t n = std::min<int64_t>(m.fisher.max_dev_pairs, dir.size());
    for (int64_t i = 0; i < n; ++i)
      batch.push_back(encode_pair(grown.vocab, dir.src_lang, dir.tgt_lang, dir.pairs[i].first,
                                  dir.pairs[i].second));
    if (!batch.empty()) batches.push_back(std::move(batch));
  }

  FisherMap fmap = fisher(grown, batches);
  GroupSet groups = fisher_groups(fmap, m.fisher.threshold, m.fisher.gamma_old);

  json tensors = json::object();
  int64_t above_total = 0, elements_total = 0;
  for (const auto& [name, t] : fmap) {
    double lo = t.data.empty() ? 0.0 : t.data[0], hi = lo, sum = 0.0;
    int64_t above = 0;
    for (double x : t.data) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
      if (x > m.fisher.threshold) ++above;
    }
    tensors[name] = {{"min", lo},
                     {"max", hi},
                     {"mean", sum / static_cast<double>(t.numel())},
                     {"above_threshold", above},
                     {"elements", t.numel()}};
    above_total += above;
    elements_total += t.numel();
  }
  json summary{{"threshold", m.fisher.threshold},
               {"gamma_old", m.fisher.gamma_old},
               {"above_threshold", above_total},
               {"elements", elements_total},
               {"tensors", tensors}};

  st.write_output("summary.json", summary.dump(2) + "\n");
  st.write_output("groups.json", groupset_to_json(groups).dump(2) + "\n");
  st.finish();
  return summary;
}

nlohmann::json report_compare(const EvalReport& baseline, const EvalReport& continual) {
  auto metric = [](double base, double cont, bool base_present) {
    json entry{{"continual", cont}};
    entry["baseline"] = base_present ? json(base) : json();
    entry["delta"] = base_present ? json(cont - base) : json();
    return entry;
  };
  bool base_added = baseline.n_added > 0;
  return json{
      {"baseline", {{"checkpoint", baseline.checkpoint_id}, {"step", baseline.step}}},
      {"continual", {{"checkpoint", continual.checkpoint_id}, {"step", continual.step}}},
      {"groups",
       {{"all",
         {{"bleu", metric(baseline.bleu_all, continual.bleu_all, true)},
          {"chrfpp", metric(baseline.chrf_all, continual.chrf_all, true)},
          {"n_baseline", baseline.directions.size()},
          {"n_continual", continual.directions.size()}}},
        {"orig",
         {{"bleu", metric(baseline.bleu_orig, continual.bleu_orig, true)},
          {"chrfpp", metric(baseline.chrf_orig, continual.chrf_orig, true)},
          {"n_baseline", baseline.n_orig},
          {"n_continual", continual.n_orig}}},
        {"added",
         {{"bleu", metric(baseline.bleu_added, continual.bleu_added, base_added)},
          {"chrfpp", metric(baseline.chrf_added, continual.chrf_added, base_added)},
          {"n_baseline", baseline.n_added},
          {"n_continual", continual.n_added}}}}}};
}

std::string compare_csv(const nlohmann::json& compare) {
  std::string csv = "group,metric,baseline,continual,delta\n";
  for (const char* group : {"all", "orig", "added"}) {
    for (const char* met : {"bleu", "chrfpp"}) {
      const json& cell = compare.at("groups").at(group).at(met);
      csv += std::string(group) + "," + met + ",";
      csv += cell.at("baseline").is_null() ? "" : fmt_double(cell.at("baseline").get<double>());
      csv += "," + fmt_double(cell.at("continual").get<double>()) + ",";
      csv += cell.at("delta").is_null() ? "" : fmt_double(cell.at("delta").get<double>());
      csv += "\n";
    }
  }
  return csv;
}

nlohmann::json stage_report(const ExperimentManifest& m, const std::string& workdir) {
  Stage st(m, workdir, "report");
  st.depends_on("eval/seed");
  st.depends_on("eval/continual");

  EvalReport baseline = eval_report_from_json(st.input_json("eval/seed/report.json"));
  EvalReport continual = eval_report_from_json(st.input_json("eval/continual/report.json"));

  json compare = report_compare(baseline, continual);
  st.write_output("compare.json", compare.dump(2) + "\n");
  st.write_output("compare.csv", compare_csv(compare));
  st.finish();
  return compare;
}

void run_all(const ExperimentManifest& m, const std::string& workdir) {
  stage_gen_data(m, workdir);
  stage_train_seed(m, workdir);
  stage_grow(m, workdir);
  stage_train_continual(m, workdir);
  stage_evaluate(m, workdir, "seed");
  stage_evaluate(m, workdir, "continual");
  stage_probe_forget(m, workdir);
  stage_analyze_norms(m, workdir);
  stage_fisher(m, workdir);
  stage_report(m, workdir);
}

}  // namespace mtgrow
