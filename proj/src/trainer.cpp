#include "mtgrow/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>

#include "mtgrow/model.hpp"
#include "mtgrow/tape.hpp"

namespace mtgrow {

double lr_at(int64_t step, double peak, int64_t warmup) {
  if (step < 1) fail(ErrorKind::Domain, "lr_at: step must be >= 1");
  if (warmup < 1) fail(ErrorKind::Domain, "lr_at: warmup must be >= 1");
  double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

double gamma_at(const ParamGroup& group, int64_t continual_step) {
  if (continual_step < 0) fail(ErrorKind::Domain, "gamma_at: continual_step must be >= 0");
  if (group.ramp_steps <= 0 || continual_step >= group.ramp_steps) return group.gamma_end;
  double frac = static_cast<double>(continual_step) / static_cast<double>(group.ramp_steps);
  return group.gamma_start + (group.gamma_end - group.gamma_start) * frac;
}

void GroupSet::validate(const NamedParamMap& params) const {
  if (groups.empty()) fail(ErrorKind::Domain, "GroupSet: no groups");
  for (const ParamGroup& g : groups)
    if (g.gamma_start <= 0.0 || g.gamma_end <= 0.0)
      fail(ErrorKind::Domain, "GroupSet: gamma values must be > 0 in group '" + g.name + "'");
  if (runs.size() != params.size())
    fail(ErrorKind::Domain, "GroupSet: covers " + std::to_string(runs.size()) + " tensors, model has " +
                                std::to_string(params.size()));
  for (const auto& [name, t] : params) {
    auto it = runs.find(name);
    if (it == runs.end()) fail(ErrorKind::Domain, "GroupSet: tensor '" + name + "' unassigned");
    int64_t covered = 0;
    for (const auto& [g, count] : it->second) {
      if (g < 0 || g >= static_cast<int32_t>(groups.size()))
        fail(ErrorKind::Domain, "GroupSet: bad group index in '" + name + "'");
      if (count <= 0) fail(ErrorKind::Domain, "GroupSet: non-positive run in '" + name + "'");
      covered += count;
    }
    if (covered != t.numel())
      fail(ErrorKind::Domain, "GroupSet: '" + name + "' covers " + std::to_string(covered) +
                                  " of " + std::to_string(t.numel()) + " elements");
  }
}

GroupSet single_group(const NamedParamMap& params) {
  GroupSet gs;
  ParamGroup g;
  g.name = "all";
  gs.groups.push_back(g);
  for (const auto& [name, t] : params) gs.runs[name] = {{0, t.numel()}};
  return gs;
}

GroupSet old_new_groups(const NamedParamMap& params, const SurgeryReport& report,
                        ParamGroup old_group, ParamGroup new_group) {
  GroupSet gs;
  gs.groups.push_back(std::move(old_group));
  gs.groups.push_back(std::move(new_group));
  for (const auto& [name, t] : params) {
    auto it = report.tensors.find(name);
    if (it == report.tensors.end())
      fail(ErrorKind::Domain, "old_new_groups: '" + name + "' missing from the surgery report");
    std::vector<std::pair<int32_t, int64_t>> runs;
    for (const auto& [fresh, count] : it->second.is_new)
      runs.emplace_back(fresh ? 1 : 0, count);
    int64_t covered = 0;
    for (const auto& [g, count] : runs) {
      (void)g;
      covered += count;
    }
    if (covered != t.numel())
      fail(ErrorKind::Domain, "old_new_groups: report runs for '" + name + "' cover " +
                                  std::to_string(covered) + " of " + std::to_string(t.numel()));
    gs.runs[name] = std::move(runs);
  }
  return gs;
}

nlohmann::json groupset_to_json(const GroupSet& groups) {
  nlohmann::json glist = nlohmann::json::array();
  for (const ParamGroup& g : groups.groups)
    glist.push_back({{"name", g.name},
                     {"gamma_start", g.gamma_start},
                     {"gamma_end", g.gamma_end},
                     {"ramp_steps", g.ramp_steps}});
  nlohmann::json runs = nlohmann::json::object();
  for (const auto& [name, rle] : groups.runs) {
    nlohmann::json entry = nlohmann::json::array();
    for (const auto& [idx, count] : rle) entry.push_back({idx, count});
    runs[name] = std::move(entry);
  }
  return nlohmann::json{{"groups", glist}, {"runs", runs}};
}

GroupSet groupset_from_json(const nlohmann::json& j) {
  GroupSet gs;
  try {
    for (const auto& g : j.at("groups")) {
      ParamGroup pg;
      pg.name = g.at("name").get<std::string>();
      pg.gamma_start = g.at("gamma_start").get<double>();
      pg.gamma_end = g.at("gamma_end").get<double>();
      pg.ramp_steps = g.at("ramp_steps").get<int64_t>();
      gs.groups.push_back(std::move(pg));
    }
    for (const auto& [name, entry] : j.at("runs").items()) {
      std::vector<std::pair<int32_t, int64_t>> rle;
      for (const auto& pair : entry)
        rle.emplace_back(pair.at(0).get<int32_t>(), pair.at(1).get<int64_t>());
      gs.runs[name] = std::move(rle);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Manifest, std::string("bad group set: ") + e.what());
  }
  return gs;
}

void adam_step(NamedParamMap& params, const NamedParamMap& grads, NamedParamMap& adam_m,
               NamedParamMap& adam_v, int64_t t, double base_lr, const GroupSet& groups,
               int64_t continual_step) {
  if (t < 1) fail(ErrorKind::Domain, "adam_step: t must be >= 1");

  // abort-before-mutation scan
  for (const auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) fail(ErrorKind::Shape, "adam_step: no gradient for '" + name + "'");
    if (git->second.shape != p.shape)
      fail(ErrorKind::Shape, "adam_step: gradient shape mismatch for '" + name + "'");
    for (size_t i = 0; i < git->second.data.size(); ++i)
      if (!std::isfinite(git->second.data[i]))
        fail(ErrorKind::NonFinite, "adam_step: non-finite gradient in '" + name + "' at flat index " +
                                       std::to_string(i) + " (step " + std::to_string(t) + ")");
    if (groups.runs.find(name) == groups.runs.end())
      fail(ErrorKind::Domain, "adam_step: no group assignment for '" + name + "'");
  }

  std::vector<double> gamma(groups.groups.size());
  for (size_t g = 0; g < gamma.size(); ++g) gamma[g] = gamma_at(groups.groups[g], continual_step);

  double correction = std::sqrt(1.0 - std::pow(kAdamBeta2, static_cast<double>(t))) /
                      (1.0 - std::pow(kAdamBeta1, static_cast<double>(t)));

  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = adam_m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = adam_v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    if (m.shape != p.shape || v.shape != p.shape)
      fail(ErrorKind::Shape, "adam_step: moment shape mismatch for '" + name + "'");

    const auto& runs = groups.runs.at(name);
    size_t i = 0;
    for (const auto& [gidx, count] : runs) {
      double step_size = base_lr * gamma[static_cast<size_t>(gidx)] * correction;
      for (int64_t k = 0; k < count; ++k, ++i) {
        double gi = g.data[i];
        m.data[i] = kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * gi;
        v.data[i] = kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * gi * gi;
        p.data[i] -= step_size * m.data[i] / (std::sqrt(v.data[i]) + kAdamEps);
      }
    }
  }
}

std::vector<double> direction_probs(const std::vector<DirectionSpec>& directions,
                                    double temperature) {
  if (directions.empty()) fail(ErrorKind::Domain, "direction_probs: no directions");
  if (temperature < 1.0) fail(ErrorKind::Domain, "direction_probs: temperature must be >= 1");
  std::vector<double> probs(directions.size());
  double total = 0.0;
  for (size_t i = 0; i < directions.size(); ++i) {
    const DirectionSpec& d = directions[i];
    if (d.size() <= 0)
      fail(ErrorKind::Domain, "direction_probs: empty direction " +
                                  direction_key(d.src_lang, d.tgt_lang));
    if (d.alpha < 1.0)
      fail(ErrorKind::Domain, "direction_probs: alpha < 1 on " +
                                  direction_key(d.src_lang, d.tgt_lang));
    probs[i] = std::pow(d.alpha * static_cast<double>(d.size()), 1.0 / temperature);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

size_t sample_direction(const std::vector<DirectionSpec>& directions, double temperature,
                        GaussianStream& rng) {
  std::vector<double> probs = direction_probs(directions, temperature);
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

namespace {

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

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// token-weighted eval-mode loss over up to max_pairs pairs, in slices of 8
double validation_loss(const NamedParamMap& params, const ModelConfig& cfg, const Vocab& vocab,
                       const DirectionSpec& dir, int64_t max_pairs) {
  int64_t n = std::min<int64_t>(max_pairs, dir.size());
  if (n <= 0) fail(ErrorKind::Domain, "validation direction is empty");
  double weighted = 0.0;
  int64_t tokens = 0;
  for (int64_t start = 0; start < n; start += 8) {
    std::vector<Example> examples;
    for (int64_t i = start; i < std::min(n, start + 8); ++i)
      examples.push_back(encode_pair(vocab, dir.src_lang, dir.tgt_lang,
                                     dir.pairs[static_cast<size_t>(i)].first,
                                     dir.pairs[static_cast<size_t>(i)].second));
    LossResult r = forward_loss(params, cfg, Batch::from_examples(examples), false, 0);
    weighted += r.loss * static_cast<double>(r.tokens);
    tokens += r.tokens;
  }
  return tokens > 0 ? weighted / static_cast<double>(tokens) : 0.0;
}

}  // namespace

TrainResult train(const Checkpoint& start, const std::vector<DirectionSpec>& train_dirs,
                  const std::vector<DirectionSpec>& val_dirs, const TrainConfig& config,
                  const GroupSet& groups) {
  if (config.total_steps < 0) fail(ErrorKind::Domain, "train: total_steps must be >= 0");
  if (config.batch_tokens < 1) fail(ErrorKind::Domain, "train: batch_tokens must be >= 1");
  if (train_dirs.empty()) fail(ErrorKind::Domain, "train: no training directions");
  groups.validate(start.params);

  ModelConfig cfg = start.config;
  cfg.label_smoothing_epsilon = config.label_smoothing;
  cfg.validate();

  // the language-coverage gate: a direction whose tag never entered the vocab
  // cannot be trained or validated against
  for (const std::vector<DirectionSpec>* dirs : {&train_dirs, &val_dirs})
    for (const DirectionSpec& d : *dirs)
      for (const std::string& lang : {d.src_lang, d.tgt_lang})
        if (!start.vocab.contains(tag_token(lang)))
          fail(ErrorKind::Vocab, "train: language tag for '" + lang + "' missing from the vocabulary");

  // alpha overrides by direction key
  std::vector<DirectionSpec> dirs = train_dirs;
  for (DirectionSpec& d : dirs) {
    auto it = config.alpha.find(direction_key(d.src_lang, d.tgt_lang));
    if (it != config.alpha.end()) d.alpha = it->second;
  }
  std::vector<double> probs = direction_probs(dirs, config.temperature);

  NamedParamMap params = start.params;
  NamedParamMap adam_m = start.adam_m;
  NamedParamMap adam_v = start.adam_v;

  GaussianStream rng(mix_seed(config.seed, fnv1a("train-loop")));

  std::string log;
  log += "step,lr";
  for (const ParamGroup& g : groups.groups) log += ",gamma_" + g.name;
  log += ",train_loss";
  for (const DirectionSpec& d : val_dirs) log += ",val_" + direction_key(d.src_lang, d.tgt_lang);
  log += ",val_mean\n";

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.best_step = start.step;
  bool have_best = false;

  for (int64_t local = 1; local <= config.total_steps; ++local) {
    int64_t global = start.step + local;
    int64_t sched_step = config.reset_scheduler ? local : global;
    double lr = lr_at(sched_step, config.peak_lr, config.warmup_steps);
    int64_t continual_step = local - 1;

    // assemble a batch from one sampled direction
    double u = rng.uniform();
    size_t pick = probs.size() - 1;
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    const DirectionSpec& dir = dirs[pick];
    std::vector<Example> examples;
    int64_t batch_token_count = 0;
    while (batch_token_count < config.batch_tokens) {
      const auto& pair = dir.pairs[rng.next_u64() % dir.pairs.size()];
      Example ex = encode_pair(start.vocab, dir.src_lang, dir.tgt_lang, pair.first, pair.second);
      batch_token_count += static_cast<int64_t>(ex.src.size() + ex.tgt_out.size());
      examples.push_back(std::move(ex));
    }

    Tape tape(true);
    auto pnodes = push_params(tape, params);
    DropoutCtx dc{true, cfg.attention_dropout, mix_seed(config.seed, static_cast<uint64_t>(global)),
                  0};
    int64_t token_count = 0;
    Tape::NodeId loss_node =
        forward_loss_node(tape, pnodes, cfg, Batch::from_examples(examples), &dc, &token_count);
    tape.backward(loss_node);
    double train_loss = tape.scalar_value(loss_node);

    NamedParamMap grads;
    for (const auto& [name, t] : params) {
      Tensor g = Tensor::zeros(t.shape);
      g.data = tape.grad(pnodes.at(name));
      grads.emplace(name, std::move(g));
    }

    if (config.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, g] : grads) {
        (void)name;
        for (double x : g.data) sq += x * x;
      }
      double norm = std::sqrt(sq);
      if (norm > config.clip_norm) {
        double scale = config.clip_norm / norm;
        for (auto& [name, g] : grads) {
          (void)name;
          for (double& x : g.data) x *= scale;
        }
      }
    }

    adam_step(params, grads, adam_m, adam_v, global, lr, groups, continual_step);

    log += std::to_string(global) + "," + fmt_double(lr);
    for (const ParamGroup& g : groups.groups) log += "," + fmt_double(gamma_at(g, continual_step));
    log += "," + fmt_double(train_loss);

    bool validate_now = config.val_cadence > 0 && !val_dirs.empty() &&
                        (local % config.val_cadence == 0 || local == config.total_steps);
    if (validate_now) {
      double val_sum = 0.0;
      for (const DirectionSpec& d : val_dirs) {
        double vl = validation_loss(params, cfg, start.vocab, d, config.max_val_pairs);
        val_sum += vl;
        log += "," + fmt_double(vl);
      }
      double val_mean = val_sum / static_cast<double>(val_dirs.size());
      log += "," + fmt_double(val_mean);
      if (val_mean < result.best_val_loss) {
        result.best_val_loss = val_mean;
        result.best_step = global;
        result.best = start;
        result.best.params = params;
        result.best.adam_m = adam_m;
        result.best.adam_v = adam_v;
        result.best.step = global;
        have_best = true;
      }
    } else {
      for (size_t i = 0; i < val_dirs.size() + 1; ++i) log += ",";
    }
    log += "\n";
  }

  result.last = start;
  result.last.params = std::move(params);
  result.last.adam_m = std::move(adam_m);
  result.last.adam_v = std::move(adam_v);
  result.last.step = start.step + config.total_steps;
  if (!have_best) {
    result.best = result.last;
    result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
    result.best_step = result.last.step;
  }
  result.log_csv = std::move(log);
  return result;
}

}  // namespace mtgrow
