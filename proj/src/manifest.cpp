#include "mtgrow/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "mtgrow/common.hpp"

namespace mtgrow {

namespace {

using nlohmann::json;

[[noreturn]] void fail_at(const std::string& path, const std::string& what) {
  fail(ErrorKind::Manifest, path + ": " + what);
}

// Pulls typed fields out of one JSON object, remembering which keys were
// consumed so finish() can reject anything unrecognized. All errors carry the
// dotted path of the offending field.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail_at(path_, "expected an object");
  }

  std::string sub(const std::string& key) const { return path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail_at(sub(key), "expected a string");
    return v->get<std::string>();
  }

  bool get_bool(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail_at(sub(key), "expected a boolean");
    return v->get<bool>();
  }

  int64_t get_int(const std::string& key, int64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail_at(sub(key), "expected an integer");
    return v->get<int64_t>();
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail_at(sub(key), "expected an integer");
    if (!v->is_number_unsigned() && v->get<int64_t>() < 0)
      fail_at(sub(key), "expected a non-negative integer");
    return v->get<uint64_t>();
  }

  double get_double(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) fail_at(sub(key), "expected a number");
    return v->get<double>();
  }

  // nullptr when the key is absent
  const json* get_object(const std::string& key) {
    const json* v = find(key);
    if (v && !v->is_object()) fail_at(sub(key), "expected an object");
    return v;
  }

  const json* get_array(const std::string& key) {
    const json* v = find(key);
    if (v && !v->is_array()) fail_at(sub(key), "expected an array");
    return v;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) fail_at(sub(item.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::string> string_list(const json* arr, const std::string& path) {
  std::vector<std::string> out;
  if (!arr) return out;
  for (size_t i = 0; i < arr->size(); ++i) {
    const json& v = (*arr)[i];
    if (!v.is_string()) fail_at(path + "." + std::to_string(i), "expected a string");
    out.push_back(v.get<std::string>());
  }
  return out;
}

// enum-from-string helpers throw Domain; rebadge as Manifest at the field
template <typename Fn>
auto enum_field(Fn parse, const std::string& text, const std::string& path)
    -> decltype(parse(text)) {
  try {
    return parse(text);
  } catch (const Error& e) {
    fail_at(path, e.what());
  }
}

LanguageSpec language_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  LanguageSpec spec;
  spec.language = r.get_string("language", "");
  spec.script = r.get_string("script", "");
  spec.cipher_seed = r.get_u64("cipher_seed", spec.cipher_seed);
  spec.reorder = enum_field(reorder_from_string, r.get_string("reorder", to_string(spec.reorder)),
                            r.sub("reorder"));
  spec.window = r.get_int("window", spec.window);
  spec.tier =
      enum_field(tier_from_string, r.get_string("tier", to_string(spec.tier)), r.sub("tier"));
  r.finish();
  return spec;
}

json language_to_json(const LanguageSpec& spec) {
  return json{{"language", spec.language},   {"script", spec.script},
              {"cipher_seed", spec.cipher_seed}, {"reorder", to_string(spec.reorder)},
              {"window", spec.window},       {"tier", to_string(spec.tier)}};
}

DataSettings data_from_json(const json* j, const std::string& path) {
  DataSettings d;
  if (!j) return d;
  Reader r(*j, path);
  d.lexicon_size = r.get_int("lexicon_size", d.lexicon_size);
  d.corpus_scale = r.get_double("corpus_scale", d.corpus_scale);
  d.val_pairs = r.get_int("val_pairs", d.val_pairs);
  d.test_pairs = r.get_int("test_pairs", d.test_pairs);
  if (const json* langs = r.get_array("languages"))
    for (size_t i = 0; i < langs->size(); ++i)
      d.languages.push_back(
          language_from_json((*langs)[i], r.sub("languages") + "." + std::to_string(i)));
  r.finish();
  return d;
}

json data_to_json(const DataSettings& d) {
  json langs = json::array();
  for (const auto& spec : d.languages) langs.push_back(language_to_json(spec));
  return json{{"lexicon_size", d.lexicon_size},
              {"corpus_scale", d.corpus_scale},
              {"val_pairs", d.val_pairs},
              {"test_pairs", d.test_pairs},
              {"languages", langs}};
}

VocabSettings vocab_from_json(const json* j, const std::string& path) {
  VocabSettings v;
  if (!j) return v;
  Reader r(*j, path);
  v.seed_size = r.get_int("seed_size", v.seed_size);
  v.grown_size = r.get_int("grown_size", v.grown_size);
  v.temperature = r.get_double("temperature", v.temperature);
  r.finish();
  return v;
}

ModelConfig model_from_json(const json* j, const std::string& path) {
  ModelConfig cfg;
  if (!j) return cfg;
  Reader r(*j, path);
  cfg.enc_layers = r.get_int("enc_layers", cfg.enc_layers);
  cfg.dec_layers = r.get_int("dec_layers", cfg.dec_layers);
  cfg.model_dim = r.get_int("model_dim", cfg.model_dim);
  cfg.ffn_hidden_dim = r.get_int("ffn_hidden_dim", cfg.ffn_hidden_dim);
  cfg.heads = r.get_int("heads", cfg.heads);
  cfg.vocab_size = r.get_int("vocab_size", cfg.vocab_size);
  cfg.attention_dropout = r.get_double("attention_dropout", cfg.attention_dropout);
  cfg.label_smoothing_epsilon = r.get_double("label_smoothing_epsilon", cfg.label_smoothing_epsilon);
  cfg.max_positions = r.get_int("max_positions", cfg.max_positions);
  r.finish();
  return cfg;
}

TrainConfig train_from_json(const json* j, const std::string& path) {
  TrainConfig c;
  if (!j) return c;
  Reader r(*j, path);
  c.peak_lr = r.get_double("peak_lr", c.peak_lr);
  c.warmup_steps = r.get_int("warmup_steps", c.warmup_steps);
  c.total_steps = r.get_int("total_steps", c.total_steps);
  c.batch_tokens = r.get_int("batch_tokens", c.batch_tokens);
  c.temperature = r.get_double("temperature", c.temperature);
  c.label_smoothing = r.get_double("label_smoothing", c.label_smoothing);
  c.val_cadence = r.get_int("val_cadence", c.val_cadence);
  c.reset_scheduler = r.get_bool("reset_scheduler", c.reset_scheduler);
  c.clip_norm = r.get_double("clip_norm", c.clip_norm);
  c.max_val_pairs = r.get_int("max_val_pairs", c.max_val_pairs);
  if (const json* alpha = r.get_object("alpha"))
    for (const auto& item : alpha->items()) {
      if (!item.value().is_number())
        fail_at(r.sub("alpha") + "." + item.key(), "expected a number");
      c.alpha[item.key()] = item.value().get<double>();
    }
  r.finish();
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"peak_lr", c.peak_lr},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"batch_tokens", c.batch_tokens},
              {"temperature", c.temperature},
              {"alpha", json(c.alpha)},
              {"label_smoothing", c.label_smoothing},
              {"val_cadence", c.val_cadence},
              {"reset_scheduler", c.reset_scheduler},
              {"clip_norm", c.clip_norm},
              {"max_val_pairs", c.max_val_pairs}};
}

GrowthPlan growth_from_json(const json* j, const std::string& path) {
  GrowthPlan g;
  if (!j) return g;
  Reader r(*j, path);
  g.embedding_init =
      enum_field(embedding_init_from_string,
                 r.get_string("embedding_init", to_string(g.embedding_init)), r.sub("embedding_init"));
  if (const json* w = r.get_object("width")) {
    Reader wr(*w, r.sub("width"));
    g.width.factor = wr.get_int("factor", g.width.factor);
    g.width.init = enum_field(width_init_from_string,
                              wr.get_string("init", to_string(g.width.init)), wr.sub("init"));
    g.width.noise_std = wr.get_double("noise_std", g.width.noise_std);
    g.width.norm = enum_field(norm_mode_from_string,
                              wr.get_string("norm", to_string(g.width.norm)), wr.sub("norm"));
    wr.finish();
  }
  if (const json* d = r.get_object("depth")) {
    Reader dr(*d, r.sub("depth"));
    g.depth.enc_count = dr.get_int("enc_count", g.depth.enc_count);
    g.depth.dec_count = dr.get_int("dec_count", g.depth.dec_count);
    g.depth.enc_position = dr.get_string("enc_position", g.depth.enc_position);
    g.depth.dec_position = dr.get_string("dec_position", g.depth.dec_position);
    g.depth.init = enum_field(depth_init_from_string,
                              dr.get_string("init", to_string(g.depth.init)), dr.sub("init"));
    dr.finish();
  }
  r.finish();
  return g;
}

json growth_to_json(const GrowthPlan& g) {
  return json{{"embedding_init", to_string(g.embedding_init)},
              {"width",
               {{"factor", g.width.factor},
                {"init", to_string(g.width.init)},
                {"noise_std", g.width.noise_std},
                {"norm", to_string(g.width.norm)}}},
              {"depth",
               {{"enc_count", g.depth.enc_count},
                {"dec_count", g.depth.dec_count},
                {"enc_position", g.depth.enc_position},
                {"dec_position", g.depth.dec_position},
                {"init", to_string(g.depth.init)}}}};
}

// ramp_default: value used when the field is absent (the continual budget)
GammaSchedule gamma_from_json(const json* j, const std::string& path, int64_t ramp_default) {
  GammaSchedule g;
  g.ramp_steps = ramp_default;
  if (!j) return g;
  Reader r(*j, path);
  g.start = r.get_double("start", g.start);
  g.end = r.get_double("end", g.end);
  g.ramp_steps = r.get_int("ramp_steps", ramp_default);
  r.finish();
  return g;
}

json gamma_to_json(const GammaSchedule& g) {
  return json{{"start", g.start}, {"end", g.end}, {"ramp_steps", g.ramp_steps}};
}

EvalSettings eval_from_json(const json* j, const std::string& path) {
  EvalSettings e;
  if (!j) return e;
  Reader r(*j, path);
  e.beam = r.get_int("beam", e.beam);
  e.length_penalty = r.get_double("length_penalty", e.length_penalty);
  e.max_len = r.get_int("max_len", e.max_len);
  r.finish();
  return e;
}

FisherSettings fisher_from_json(const json* j, const std::string& path) {
  FisherSettings f;
  if (!j) return f;
  Reader r(*j, path);
  f.threshold = r.get_double("threshold", f.threshold);
  f.gamma_old = r.get_double("gamma_old", f.gamma_old);
  f.max_dev_pairs = r.get_int("max_dev_pairs", f.max_dev_pairs);
  r.finish();
  return f;
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail_at(path, what);
}

void validate_phase(const TrainConfig& c, const std::string& path,
                    const std::set<std::string>& allowed_languages) {
  check(c.peak_lr > 0.0, path + ".peak_lr", "must be positive");
  check(c.warmup_steps >= 1, path + ".warmup_steps", "must be at least 1");
  check(c.total_steps >= 0, path + ".total_steps", "must be non-negative");
  check(c.batch_tokens >= 1, path + ".batch_tokens", "must be at least 1");
  check(c.temperature >= 1.0, path + ".temperature", "must be at least 1");
  check(c.label_smoothing >= 0.0 && c.label_smoothing < 1.0, path + ".label_smoothing",
        "must be in [0, 1)");
  check(c.val_cadence >= 0, path + ".val_cadence", "must be non-negative");
  check(c.clip_norm >= 0.0, path + ".clip_norm", "must be non-negative");
  check(c.max_val_pairs >= 1, path + ".max_val_pairs", "must be at least 1");
  for (const auto& [key, a] : c.alpha) {
    std::string apath = path + ".alpha." + key;
    auto dash = key.find('-');
    check(dash != std::string::npos && key.find('-', dash + 1) == std::string::npos, apath,
          "key must be 'src-tgt'");
    std::string src = key.substr(0, dash);
    std::string tgt = key.substr(dash + 1);
    check((src == kEngLanguage) != (tgt == kEngLanguage), apath,
          "exactly one side must be 'eng'");
    const std::string& other = src == kEngLanguage ? tgt : src;
    check(allowed_languages.count(other) > 0, apath,
          "'" + other + "' is not trained in this phase");
    check(a >= 1.0, apath, "alpha must be at least 1");
  }
}

void validate_gamma(const GammaSchedule& g, const std::string& path) {
  check(g.start > 0.0, path + ".start", "must be positive");
  check(g.end > 0.0, path + ".end", "must be positive");
  check(g.ramp_steps >= 0, path + ".ramp_steps", "must be non-negative");
}

}  // namespace

ExperimentManifest manifest_from_json(const json& j) {
  Reader r(j, "manifest");
  ExperimentManifest m;
  m.name = r.get_string("name", m.name);
  m.master_seed = r.get_u64("master_seed", m.master_seed);
  m.output_dir = r.get_string("output_dir", m.output_dir);
  m.data = data_from_json(r.get_object("data"), r.sub("data"));
  m.old_languages = string_list(r.get_array("old_languages"), r.sub("old_languages"));
  m.new_languages = string_list(r.get_array("new_languages"), r.sub("new_languages"));
  m.vocab = vocab_from_json(r.get_object("vocab"), r.sub("vocab"));
  m.model = model_from_json(r.get_object("model"), r.sub("model"));
  m.seed_phase = train_from_json(r.get_object("seed_phase"), r.sub("seed_phase"));
  m.growth = growth_from_json(r.get_object("growth"), r.sub("growth"));
  m.random_init_all = r.get_bool("random_init_all", m.random_init_all);
  m.continual_phase = train_from_json(r.get_object("continual_phase"), r.sub("continual_phase"));
  m.gamma_old = gamma_from_json(r.get_object("gamma_old"), r.sub("gamma_old"),
                                m.continual_phase.total_steps);
  m.gamma_new = gamma_from_json(r.get_object("gamma_new"), r.sub("gamma_new"),
                                m.continual_phase.total_steps);
  m.eval = eval_from_json(r.get_object("eval"), r.sub("eval"));
  m.fisher = fisher_from_json(r.get_object("fisher"), r.sub("fisher"));
  r.finish();
  return m;
}

json manifest_to_json(const ExperimentManifest& m) {
  return json{{"name", m.name},
              {"master_seed", m.master_seed},
              {"output_dir", m.output_dir},
              {"data", data_to_json(m.data)},
              {"old_languages", m.old_languages},
              {"new_languages", m.new_languages},
              {"vocab",
               {{"seed_size", m.vocab.seed_size},
                {"grown_size", m.vocab.grown_size},
                {"temperature", m.vocab.temperature}}},
              {"model", config_to_json(m.model)},
              {"seed_phase", train_to_json(m.seed_phase)},
              {"growth", growth_to_json(m.growth)},
              {"random_init_all", m.random_init_all},
              {"continual_phase", train_to_json(m.continual_phase)},
              {"gamma_old", gamma_to_json(m.gamma_old)},
              {"gamma_new", gamma_to_json(m.gamma_new)},
              {"eval",
               {{"beam", m.eval.beam},
                {"length_penalty", m.eval.length_penalty},
                {"max_len", m.eval.max_len}}},
              {"fisher",
               {{"threshold", m.fisher.threshold},
                {"gamma_old", m.fisher.gamma_old},
                {"max_dev_pairs", m.fisher.max_dev_pairs}}}};
}

ExperimentManifest load_manifest(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Manifest, path + ": not valid JSON");
  ExperimentManifest m = manifest_from_json(j);
  validate_manifest(m);
  return m;
}

void validate_manifest(const ExperimentManifest& m) {
  check(!m.name.empty(), "manifest.name", "must not be empty");
  check(!m.output_dir.empty(), "manifest.output_dir", "must not be empty");

  check(m.data.lexicon_size >= 2, "manifest.data.lexicon_size", "must be at least 2");
  check(m.data.corpus_scale > 0.0, "manifest.data.corpus_scale", "must be positive");
  check(m.data.val_pairs >= 1, "manifest.data.val_pairs", "must be at least 1");
  check(m.data.test_pairs >= 1, "manifest.data.test_pairs", "must be at least 1");
  check(!m.data.languages.empty(), "manifest.data.languages", "must not be empty");

  std::set<std::string> declared;
  for (size_t i = 0; i < m.data.languages.size(); ++i) {
    const LanguageSpec& spec = m.data.languages[i];
    std::string path = "manifest.data.languages." + std::to_string(i);
    check(!spec.language.empty(), path + ".language", "must not be empty");
    check(spec.language != kEngLanguage, path + ".language",
          "'eng' is implicit and cannot be redeclared");
    for (char c : spec.language)
      check(!std::isspace(static_cast<unsigned char>(c)) && c != '-', path + ".language",
            "must not contain whitespace or '-'");
    check(!spec.script.empty(), path + ".script", "must not be empty");
    for (char c : spec.script)
      check(!std::isspace(static_cast<unsigned char>(c)) && c != '_', path + ".script",
            "must not contain whitespace or '_'");
    check(spec.window >= 2 || spec.reorder != ReorderRule::ReverseWindow, path + ".window",
          "reverse_window needs window >= 2");
    check(declared.insert(spec.language).second, path + ".language",
          "duplicate language '" + spec.language + "'");
  }

  check(!m.old_languages.empty(), "manifest.old_languages", "must not be empty");
  std::set<std::string> old_set, new_set;
  for (size_t i = 0; i < m.old_languages.size(); ++i) {
    const std::string& lang = m.old_languages[i];
    std::string path = "manifest.old_languages." + std::to_string(i);
    check(declared.count(lang) > 0, path, "'" + lang + "' is not declared in data.languages");
    check(old_set.insert(lang).second, path, "duplicate language '" + lang + "'");
  }
  for (size_t i = 0; i < m.new_languages.size(); ++i) {
    const std::string& lang = m.new_languages[i];
    std::string path = "manifest.new_languages." + std::to_string(i);
    check(declared.count(lang) > 0, path, "'" + lang + "' is not declared in data.languages");
    check(new_set.insert(lang).second, path, "duplicate language '" + lang + "'");
    check(old_set.count(lang) == 0, path, "'" + lang + "' is already an old language");
  }
  check(old_set.size() + new_set.size() == declared.size(), "manifest.old_languages",
        "old_languages + new_languages must cover data.languages exactly");

  check(m.vocab.seed_size >= 8, "manifest.vocab.seed_size", "must be at least 8");
  check(m.vocab.grown_size >= m.vocab.seed_size, "manifest.vocab.grown_size",
        "must be at least vocab.seed_size");
  check(m.vocab.temperature > 0.0, "manifest.vocab.temperature", "must be positive");

  try {
    m.model.validate();
  } catch (const Error& e) {
    fail_at("manifest.model", e.what());
  }

  std::set<std::string> all_set = old_set;
  all_set.insert(new_set.begin(), new_set.end());
  validate_phase(m.seed_phase, "manifest.seed_phase", old_set);
  validate_phase(m.continual_phase, "manifest.continual_phase", all_set);

  check(m.growth.width.factor >= 1, "manifest.growth.width.factor", "must be at least 1");
  check(m.growth.width.noise_std >= 0.0, "manifest.growth.width.noise_std",
        "must be non-negative");
  check(m.growth.depth.enc_count >= 0, "manifest.growth.depth.enc_count", "must be non-negative");
  check(m.growth.depth.dec_count >= 0, "manifest.growth.depth.dec_count", "must be non-negative");
  check(m.growth.depth.enc_position == "bottom", "manifest.growth.depth.enc_position",
        "only 'bottom' is supported");
  check(m.growth.depth.dec_position == "top", "manifest.growth.depth.dec_position",
        "only 'top' is supported");

  validate_gamma(m.gamma_old, "manifest.gamma_old");
  validate_gamma(m.gamma_new, "manifest.gamma_new");

  check(m.eval.beam >= 1, "manifest.eval.beam", "must be at least 1");
  check(m.eval.length_penalty >= 0.0, "manifest.eval.length_penalty", "must be non-negative");
  check(m.eval.max_len >= 0, "manifest.eval.max_len", "must be non-negative");

  check(m.fisher.threshold >= 0.0, "manifest.fisher.threshold", "must be non-negative");
  check(m.fisher.gamma_old > 0.0, "manifest.fisher.gamma_old", "must be positive");
  check(m.fisher.max_dev_pairs >= 1, "manifest.fisher.max_dev_pairs", "must be at least 1");
}

uint64_t manifest_hash(const ExperimentManifest& m) {
  // nlohmann objects iterate key-sorted, so dump() is already canonical
  return fnv1a(manifest_to_json(m).dump());
}

void apply_override(json& manifest_json, const std::string& dotted_path,
                    const std::string& value) {
  if (dotted_path.empty()) fail(ErrorKind::Manifest, "override path must not be empty");

  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = dotted_path.find('.', start);
    parts.push_back(dotted_path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  json* node = &manifest_json;
  std::string walked;
  for (const std::string& part : parts) {
    walked += walked.empty() ? part : "." + part;
    if (part.empty()) fail_at(walked, "empty path segment");
    if (node->is_array()) {
      if (!std::all_of(part.begin(), part.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        fail_at(walked, "array index must be numeric");
      size_t idx = node->size();
      try {
        idx = std::stoul(part);
      } catch (const std::out_of_range&) {
      }
      if (idx >= node->size())
        fail_at(walked, "index out of range (size " + std::to_string(node->size()) + ")");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      auto it = node->find(part);
      if (it == node->end()) fail_at(walked, "no such field");
      node = &*it;
    } else {
      fail_at(walked, "path descends through a scalar");
    }
  }

  // coerce the string to the leaf's current type
  if (node->is_string()) {
    *node = value;
  } else if (node->is_boolean()) {
    if (value == "true")
      *node = true;
    else if (value == "false")
      *node = false;
    else
      fail_at(dotted_path, "expected 'true' or 'false', got '" + value + "'");
  } else if (node->is_number_integer()) {
    size_t used = 0;
    int64_t parsed = 0;
    try {
      parsed = std::stoll(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (value.empty() || used != value.size())
      fail_at(dotted_path, "'" + value + "' is not an integer");
    *node = parsed;
  } else if (node->is_number_float()) {
    size_t used = 0;
    double parsed = 0.0;
    try {
      parsed = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (value.empty() || used != value.size())
      fail_at(dotted_path, "'" + value + "' is not a number");
    *node = parsed;
  } else {
    fail_at(dotted_path, "path must address a scalar leaf");
  }
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::RandomInitAll: return "random_init_all";
    case AblationAxis::RandomInitNew: return "random_init_new";
    case AblationAxis::NoUpsampling: return "no_upsampling";
    case AblationAxis::NoLrScaling: return "no_lr_scaling";
  }
  fail(ErrorKind::Domain, "bad AblationAxis");
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "random_init_all") return AblationAxis::RandomInitAll;
  if (s == "random_init_new") return AblationAxis::RandomInitNew;
  if (s == "no_upsampling") return AblationAxis::NoUpsampling;
  if (s == "no_lr_scaling") return AblationAxis::NoLrScaling;
  fail(ErrorKind::Domain, "unknown ablation axis: '" + s + "'");
}

ExperimentManifest ablation(const ExperimentManifest& base, AblationAxis axis) {
  ExperimentManifest m = base;
  switch (axis) {
    case AblationAxis::RandomInitAll:
      m.random_init_all = true;
      break;
    case AblationAxis::RandomInitNew:
      m.growth.embedding_init = EmbeddingInit::RandomNew;
      m.growth.width.init = WidthInit::RandomExpand;
      m.growth.depth.init = DepthInit::Random;
      break;
    case AblationAxis::NoUpsampling:
      m.continual_phase.alpha.clear();
      break;
    case AblationAxis::NoLrScaling:
      m.gamma_old = GammaSchedule{1.0, 1.0, 0};
      m.gamma_new = GammaSchedule{1.0, 1.0, 0};
      break;
  }
  return m;
}

}  // namespace mtgrow
