#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtgrow/checkpoint.hpp"
#include "mtgrow/model.hpp"
#include "mtgrow/surgery.hpp"
#include "mtgrow/trainer.hpp"
#include "mtgrow/vocab.hpp"

#include "json.hpp"

namespace mtgrow {

// Forgetting probe: a copy of the seed checkpoint whose embedding rows at the
// mapped old ids are replaced by the grown model's rows at the mapped new ids.
// Nothing else changes, so any score drop is attributable to those rows.
// Errors: Shape when the two models disagree on model_dim, Vocab on ids out
// of range or duplicated on either side.
Checkpoint substitute_embeddings(const Checkpoint& seed, const Checkpoint& grown,
                                 const VocabMapping& mapping);

// Frobenius drift of one doubled FFN projection. M is the seed matrix, M1 the
// retained block, M2 the appended block.
struct DriftRow {
  std::string stack;   // "encoder" | "decoder"
  int64_t layer = 0;
  std::string matrix;  // "w1" | "w2"
  double d_m1_m = 0.0;
  double d_m2_m = 0.0;
  double d_m1_m2 = 0.0;
};

// Computes the three distances and checks them against the triangle
// inequality, which any genuine metric triple has to satisfy.
DriftRow drift_row(std::string stack, int64_t layer, std::string matrix, const Tensor& m,
                   const Tensor& m1, const Tensor& m2);

struct NormDriftReport {
  std::vector<DriftRow> rows;

  // columns: stack,layer,matrix,d_M1_M,d_M2_M,d_M1_M2
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Per-layer drift of the grown checkpoint's FFN projections relative to the
// seed. Requires an exactly doubled hidden dim, unchanged layer counts, and a
// surgery report whose partition describes block-concat widening (old block
// first, appended block second); anything else is refused.
NormDriftReport norm_drift(const Checkpoint& seed, const Checkpoint& grown,
                           const SurgeryReport& report);

// Per-token empirical Fisher information: the mean over dev-set target tokens
// of the squared gradient of that token's log-likelihood, label smoothing off.
// Shapes mirror the parameter map; every entry is a sum of squares, so a
// parameter whose gradient vanishes on all dev tokens scores exactly zero.
using FisherMap = NamedParamMap;

// dev_batches is a partition of the dev set; the result does not depend on
// how the examples are grouped, only on their order.
FisherMap fisher(const Checkpoint& ckpt, const std::vector<std::vector<Example>>& dev_batches);

// Threshold split for LR scaling: elements with fisher > threshold form the
// scaled group (constant gamma_old), everything else trains at gamma 1.
GroupSet fisher_groups(const FisherMap& fisher_map, double threshold, double gamma_old);

}  // namespace mtgrow
