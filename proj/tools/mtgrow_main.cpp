// mtgrow: drive the experiment pipeline stage by stage from a JSON manifest.
//
//   mtgrow <command> --manifest m.json [--workdir DIR] [--set path=value]...
//                    [--ablation AXIS]
//
// Commands run in this order: gen-data, train-seed, grow, train-continual,
// evaluate (--target seed|grown|continual), probe-forget, analyze-norms,
// fisher, report. run-all chains the lot. Each writes into its own stage
// directory under the workdir and stamps outputs with the manifest hash, so
// stages refuse inputs produced by a different manifest.
//
// The workdir defaults to the manifest's output_dir, placed under $MTGROW_OUT
// when that is set. Exit codes: 0 success, 1 unexpected failure, otherwise a
// fixed code per error class (see error_code below).

#include <cstdlib>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtgrow/common.hpp"
#include "mtgrow/manifest.hpp"
#include "mtgrow/pipeline.hpp"

using namespace mtgrow;

namespace {

int error_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return 2;
    case ErrorKind::Domain: return 3;
    case ErrorKind::Vocab: return 4;
    case ErrorKind::BadMagic: return 5;
    case ErrorKind::BadVersion: return 6;
    case ErrorKind::Truncated: return 7;
    case ErrorKind::IndexMismatch: return 8;
    case ErrorKind::Manifest: return 9;
    case ErrorKind::StageDependency: return 10;
    case ErrorKind::Io: return 11;
    case ErrorKind::NonFinite: return 12;
  }
  return 1;
}

struct Options {
  std::string manifest_path;
  std::string workdir;
  std::vector<std::string> overrides;  // dotted.path=value
  std::string ablation_axis;
  std::string eval_target = "continual";
  std::vector<std::string> compare_paths;
};

ExperimentManifest load(const Options& opt) {
  nlohmann::json j = nlohmann::json::parse(read_file(opt.manifest_path), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Manifest, opt.manifest_path + ": not valid JSON");
  for (const std::string& pair : opt.overrides) {
    size_t eq = pair.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Manifest, "--set expects dotted.path=value, got '" + pair + "'");
    apply_override(j, pair.substr(0, eq), pair.substr(eq + 1));
  }
  ExperimentManifest m = manifest_from_json(j);
  validate_manifest(m);
  if (!opt.ablation_axis.empty()) m = ablation(m, ablation_axis_from_string(opt.ablation_axis));
  return m;
}

std::string resolve_workdir(const Options& opt, const ExperimentManifest& m) {
  if (!opt.workdir.empty()) return opt.workdir;
  if (const char* root = std::getenv("MTGROW_OUT"); root && *root)
    return std::string(root) + "/" + m.output_dir;
  return m.output_dir;
}

// The standalone comparison mode: two evaluation reports in, table out.
int compare_files(const std::vector<std::string>& paths) {
  auto read_report = [](const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::Manifest, path + ": not valid JSON");
    return eval_report_from_json(j);
  };
  nlohmann::json compare = report_compare(read_report(paths[0]), read_report(paths[1]));
  std::cout << compare.dump(2) << "\n";
  return 0;
}

int dispatch(const std::string& command, const Options& opt) {
  if (command == "report" && !opt.compare_paths.empty()) return compare_files(opt.compare_paths);

  if (opt.manifest_path.empty()) fail(ErrorKind::Manifest, "--manifest is required");
  ExperimentManifest m = load(opt);
  std::string workdir = resolve_workdir(opt, m);

  if (command == "gen-data") {
    stage_gen_data(m, workdir);
  } else if (command == "train-seed") {
    stage_train_seed(m, workdir);
  } else if (command == "grow") {
    stage_grow(m, workdir);
  } else if (command == "train-continual") {
    stage_train_continual(m, workdir);
  } else if (command == "evaluate") {
    EvalReport r = stage_evaluate(m, workdir, opt.eval_target);
    std::cout << "bleu_all=" << r.bleu_all << " chrf_all=" << r.chrf_all << "\n";
  } else if (command == "probe-forget") {
    nlohmann::json probe = stage_probe_forget(m, workdir);
    std::cout << "mean_drop=" << probe["mean_drop"].get<double>() << "\n";
  } else if (command == "analyze-norms") {
    stage_analyze_norms(m, workdir);
  } else if (command == "fisher") {
    stage_fisher(m, workdir);
  } else if (command == "report") {
    nlohmann::json compare = stage_report(m, workdir);
    std::cout << compare.dump(2) << "\n";
  } else if (command == "run-all") {
    run_all(m, workdir);
  }
  std::cout << command << ": ok (" << workdir << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grow a translation model to new languages, stage by stage"};
  app.require_subcommand(1);

  Options opt;
  std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate the synthetic corpora and both vocabularies"},
      {"train-seed", "train the seed model on the old languages"},
      {"grow", "surgically grow the seed checkpoint (or random-init at size)"},
      {"train-continual", "continual phase over old + new languages"},
      {"evaluate", "beam-decode a checkpoint over the test sets"},
      {"probe-forget", "embedding-substitution forgetting probe"},
      {"analyze-norms", "drift of widened FFN halves since the seed"},
      {"fisher", "per-token Fisher scores and threshold groups"},
      {"report", "All/Orig/Added comparison of seed vs continual"},
      {"run-all", "every stage in order"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--manifest", opt.manifest_path, "experiment manifest (JSON)");
    sub->add_option("--workdir", opt.workdir,
                    "output root (default: manifest output_dir under $MTGROW_OUT)");
    sub->add_option("--set", opt.overrides, "override a manifest leaf, dotted.path=value")
        ->take_all();
    sub->add_option("--ablation", opt.ablation_axis,
                    "derive an ablation first: random_init_all|random_init_new|"
                    "no_upsampling|no_lr_scaling");
    if (name == "evaluate")
      sub->add_option("--target", opt.eval_target, "seed|grown|continual (default continual)");
    if (name == "report")
      sub->add_option("--compare", opt.compare_paths,
                      "compare two evaluation report.json files directly")
          ->expected(2);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return dispatch(app.get_subcommands().front()->get_name(), opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return error_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
