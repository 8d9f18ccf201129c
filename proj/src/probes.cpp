#include "mtgrow/probes.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include "mtgrow/tape.hpp"

namespace mtgrow {

Checkpoint substitute_embeddings(const Checkpoint& seed, const Checkpoint& grown,
                                 const VocabMapping& mapping) {
  const Tensor& seed_emb = seed.params.at("embedding.table");
  const Tensor& grown_emb = grown.params.at("embedding.table");
  if (seed_emb.cols() != grown_emb.cols())
    fail(ErrorKind::Shape, "substitute_embeddings: embedding dims differ (" +
                               std::to_string(seed_emb.cols()) + " vs " +
                               std::to_string(grown_emb.cols()) + ")");

  std::set<int32_t> seen_old, seen_new;
  for (const auto& [old_id, new_id] : mapping.pairs) {
    if (old_id < 0 || old_id >= seed_emb.rows())
      fail(ErrorKind::Vocab, "substitute_embeddings: old id " + std::to_string(old_id) +
                                 " outside the seed table");
    if (new_id < 0 || new_id >= grown_emb.rows())
      fail(ErrorKind::Vocab, "substitute_embeddings: new id " + std::to_string(new_id) +
                                 " outside the grown table");
    if (!seen_old.insert(old_id).second)
      fail(ErrorKind::Vocab, "substitute_embeddings: duplicate old id " + std::to_string(old_id));
    if (!seen_new.insert(new_id).second)
      fail(ErrorKind::Vocab, "substitute_embeddings: duplicate new id " + std::to_string(new_id));
  }

  Checkpoint out = seed;
  Tensor& emb = out.params.at("embedding.table");
  int64_t d = emb.cols();
  for (const auto& [old_id, new_id] : mapping.pairs)
    std::copy_n(grown_emb.data.begin() + new_id * d, d, emb.data.begin() + old_id * d);
  return out;
}

DriftRow drift_row(std::string stack, int64_t layer, std::string matrix, const Tensor& m,
                   const Tensor& m1, const Tensor& m2) {
  DriftRow row;
  row.stack = std::move(stack);
  row.layer = layer;
  row.matrix = std::move(matrix);
  row.d_m1_m = frobenius_distance(m1, m);
  row.d_m2_m = frobenius_distance(m2, m);
  row.d_m1_m2 = frobenius_distance(m1, m2);
  double slack = 1e-9 * (1.0 + row.d_m1_m + row.d_m2_m);
  if (row.d_m1_m2 > row.d_m1_m + row.d_m2_m + slack)
    fail(ErrorKind::Domain, "drift_row: triangle inequality violated at " + row.stack + " layer " +
                                std::to_string(layer) + " " + row.matrix);
  return row;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// The appended-block layout written by concat-style widening: W1 stacks the
// new rows under the old ones, W2 appends the new columns after the old ones
// within each row.
std::vector<std::pair<bool, int64_t>> concat_layout(const std::string& matrix, int64_t h,
                                                    int64_t d) {
  std::vector<std::pair<bool, int64_t>> expected;
  if (matrix == "w1") {
    expected = {{false, h * d}, {true, h * d}};
  } else {
    for (int64_t r = 0; r < d; ++r) {
      expected.emplace_back(false, h);
      expected.emplace_back(true, h);
    }
  }
  return expected;
}

}  // namespace

std::string NormDriftReport::to_csv() const {
  std::string out = "stack,layer,matrix,d_M1_M,d_M2_M,d_M1_M2\n";
  for (const DriftRow& r : rows)
    out += r.stack + "," + std::to_string(r.layer) + "," + r.matrix + "," + fmt_double(r.d_m1_m) +
           "," + fmt_double(r.d_m2_m) + "," + fmt_double(r.d_m1_m2) + "\n";
  return out;
}

nlohmann::json NormDriftReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const DriftRow& r : rows)
    arr.push_back({{"stack", r.stack},
                   {"layer", r.layer},
                   {"matrix", r.matrix},
                   {"d_M1_M", r.d_m1_m},
                   {"d_M2_M", r.d_m2_m},
                   {"d_M1_M2", r.d_m1_m2}});
  return arr;
}

NormDriftReport norm_drift(const Checkpoint& seed, const Checkpoint& grown,
                           const SurgeryReport& report) {
  if (seed.config.enc_layers != grown.config.enc_layers ||
      seed.config.dec_layers != grown.config.dec_layers)
    fail(ErrorKind::Domain, "norm_drift: layer counts differ; drift is defined over width growth");
  if (seed.config.model_dim != grown.config.model_dim)
    fail(ErrorKind::Shape, "norm_drift: model_dim mismatch");
  int64_t h = seed.config.ffn_hidden_dim;
  int64_t d = seed.config.model_dim;
  if (grown.config.ffn_hidden_dim != 2 * h)
    fail(ErrorKind::Domain, "norm_drift: grown hidden dim must be exactly double the seed's");

  NormDriftReport out;
  for (const std::string& prefix : ffn_prefixes(seed.config)) {
    std::string stack = prefix.substr(0, prefix.find('.'));
    int64_t layer = std::stoll(prefix.substr(prefix.rfind('.') + 1));
    for (const std::string& matrix : {std::string("w1"), std::string("w2")}) {
      std::string name = prefix + ".ffn." + matrix;
      auto it = report.tensors.find(name);
      if (it == report.tensors.end())
        fail(ErrorKind::Domain, "norm_drift: no partition for '" + name + "' in the report");
      if (it->second.is_new != concat_layout(matrix, h, d))
        fail(ErrorKind::Domain,
             "norm_drift: partition of '" + name + "' does not describe concat widening");

      const Tensor& m = seed.params.at(name);
      const Tensor& big = grown.params.at(name);
      Tensor m1 = Tensor::zeros(m.shape);
      Tensor m2 = Tensor::zeros(m.shape);
      if (matrix == "w1") {
        std::copy_n(big.data.begin(), h * d, m1.data.begin());
        std::copy_n(big.data.begin() + h * d, h * d, m2.data.begin());
      } else {
        for (int64_t r = 0; r < d; ++r) {
          std::copy_n(big.data.begin() + r * 2 * h, h, m1.data.begin() + r * h);
          std::copy_n(big.data.begin() + r * 2 * h + h, h, m2.data.begin() + r * h);
        }
      }
      out.rows.push_back(drift_row(stack, layer, matrix, m, m1, m2));
    }
  }
  return out;
}

FisherMap fisher(const Checkpoint& ckpt, const std::vector<std::vector<Example>>& dev_batches) {
  ModelConfig cfg = ckpt.config;
  cfg.label_smoothing_epsilon = 0.0;
  cfg.validate();

  FisherMap acc;
  for (const auto& [name, t] : ckpt.params) acc.emplace(name, Tensor::zeros(t.shape));

  int64_t tokens = 0;
  for (const std::vector<Example>& batch : dev_batches) {
    for (const Example& ex : batch) {
      if (ex.tgt_in.size() != ex.tgt_out.size())
        fail(ErrorKind::Shape, "fisher: tgt_in/tgt_out length mismatch in a dev example");
      if (ex.src.empty() || ex.tgt_out.empty()) continue;
      for (size_t pos = 0; pos < ex.tgt_out.size(); ++pos) {
        if (ex.tgt_out[pos] == kPadId) continue;
        // one tape per token: the gradient of that token's log-likelihood
        // alone, which a whole-sentence backward cannot disentangle
        Tape tape(true);
        auto p = push_params(tape, ckpt.params);
        DropoutCtx dc{false, 0.0, 0, 0};
        auto enc = encode_src(tape, p, cfg, ex.src, &dc);
        auto logits = decode_logits(tape, p, cfg, enc, ex.tgt_in, &dc);
        std::vector<int32_t> masked(ex.tgt_out.size(), kPadId);
        masked[pos] = ex.tgt_out[pos];
        auto loss = tape.label_smoothed_nll(logits, masked, 0.0, kPadId, nullptr);
        tape.backward(loss);
        for (auto& [name, a] : acc) {
          const std::vector<double>& g = tape.grad(p.at(name));
          for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += g[i] * g[i];
        }
        ++tokens;
      }
    }
  }
  if (tokens == 0) fail(ErrorKind::Domain, "fisher: dev set has no target tokens");
  for (auto& [name, a] : acc) {
    (void)name;
    for (double& x : a.data) x /= static_cast<double>(tokens);
  }
  return acc;
}

GroupSet fisher_groups(const FisherMap& fisher_map, double threshold, double gamma_old) {
  if (threshold < 0.0) fail(ErrorKind::Domain, "fisher_groups: threshold must be >= 0");
  if (gamma_old <= 0.0) fail(ErrorKind::Domain, "fisher_groups: gamma_old must be > 0");

  GroupSet gs;
  ParamGroup scaled, rest;
  scaled.name = "fisher_scaled";
  scaled.gamma_start = scaled.gamma_end = gamma_old;
  rest.name = "unscaled";
  gs.groups = {scaled, rest};

  for (const auto& [name, f] : fisher_map) {
    auto& runs = gs.runs[name];
    for (double x : f.data) {
      int32_t g = x > threshold ? 0 : 1;
      if (!runs.empty() && runs.back().first == g)
        ++runs.back().second;
      else
        runs.emplace_back(g, 1);
    }
  }
  return gs;
}

}  // namespace mtgrow
