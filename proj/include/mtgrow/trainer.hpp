#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtgrow/checkpoint.hpp"
#include "mtgrow/surgery.hpp"
#include "mtgrow/synth_data.hpp"

#include "json.hpp"

namespace mtgrow {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.98;
inline constexpr double kAdamEps = 1e-9;

// Inverse-square-root schedule: peak * min(step/warmup, sqrt(warmup/step)).
// step counts from 1; step < 1 or warmup < 1 is a domain error.
double lr_at(int64_t step, double peak, int64_t warmup);

// A learning-rate scale schedule attached to a slice of the parameters.
struct ParamGroup {
  std::string name;
  double gamma_start = 1.0;
  double gamma_end = 1.0;
  int64_t ramp_steps = 0;  // 0 jumps straight to gamma_end
};

// Linear gamma_start -> gamma_end over ramp_steps of the continual phase,
// clamped at gamma_end afterwards. continual_step counts from 0.
double gamma_at(const ParamGroup& group, int64_t continual_step);

// Element-to-group assignment: per tensor, run-length encoded group indices
// over the flattened elements. Together the runs partition every element.
struct GroupSet {
  std::vector<ParamGroup> groups;
  std::map<std::string, std::vector<std::pair<int32_t, int64_t>>> runs;

  // Domain error unless every parameter element is covered exactly once by a
  // valid group index.
  void validate(const NamedParamMap& params) const;
};

// Everything in one group with gamma 1 (plain Adam).
GroupSet single_group(const NamedParamMap& params);

// Two groups driven by the surgery report's old/new element runs: old_group
// covers elements copied from the seed model, new_group the rest.
GroupSet old_new_groups(const NamedParamMap& params, const SurgeryReport& report,
                        ParamGroup old_group, ParamGroup new_group);

nlohmann::json groupset_to_json(const GroupSet& groups);
GroupSet groupset_from_json(const nlohmann::json& j);

// One Adam update over all tensors. t is the global (bias-correction) step,
// counting from 1. Effective lr per element = base_lr * gamma_at(its group,
// continual_step). Non-finite gradients abort before any mutation.
void adam_step(NamedParamMap& params, const NamedParamMap& grads, NamedParamMap& adam_m,
               NamedParamMap& adam_v, int64_t t, double base_lr, const GroupSet& groups,
               int64_t continual_step);

// p_d proportional to (alpha_d * n_d)^(1/temperature).
std::vector<double> direction_probs(const std::vector<DirectionSpec>& directions,
                                    double temperature);
size_t sample_direction(const std::vector<DirectionSpec>& directions, double temperature,
                        GaussianStream& rng);

struct TrainConfig {
  double peak_lr = 0.003;
  int64_t warmup_steps = 8000;
  int64_t total_steps = 0;   // steps run by this call
  int64_t batch_tokens = 256;
  double temperature = 1.0;
  std::map<std::string, double> alpha;  // "src-tgt" -> alpha override, default 1
  double label_smoothing = 0.1;
  uint64_t seed = 0;
  int64_t val_cadence = 100;  // also validates on the final step; 0 disables
  bool reset_scheduler = false;
  double clip_norm = 1.0;  // global gradient norm cap; 0 disables
  int64_t max_val_pairs = 32;  // per direction
};

struct TrainResult {
  Checkpoint best;  // lowest mean validation loss (falls back to last)
  Checkpoint last;
  std::string log_csv;
  double best_val_loss = 0.0;
  int64_t best_step = 0;
};

// The training loop: sample a direction, assemble ~batch_tokens of encoded
// pairs, forward/backward on the tape, clip, adam_step. The scheduler step is
// ckpt.step + local step unless reset_scheduler. Validation loss is the
// token-weighted eval-mode loss over each val direction at the cadence.
// The log is CSV: step, lr, one gamma column per group, train_loss, then one
// val column per val direction plus val_mean (blank off-cadence).
TrainResult train(const Checkpoint& start, const std::vector<DirectionSpec>& train_dirs,
                  const std::vector<DirectionSpec>& val_dirs, const TrainConfig& config,
                  const GroupSet& groups);

}  // namespace mtgrow
