#include "mtgrow/model.hpp"

#include <cmath>
#include <cstdio>

#include "mtgrow/vocab.hpp"

namespace mtgrow {

void ModelConfig::validate() const {
  if (enc_layers <= 0 || dec_layers <= 0) fail(ErrorKind::Domain, "layer counts must be positive");
  if (model_dim <= 0 || ffn_hidden_dim <= 0) fail(ErrorKind::Domain, "dims must be positive");
  if (heads <= 0 || model_dim % heads != 0)
    fail(ErrorKind::Domain, "heads must divide model_dim (" + std::to_string(model_dim) + " % " +
                                std::to_string(heads) + ")");
  if (vocab_size <= 0) fail(ErrorKind::Domain, "vocab_size must be positive");
  if (attention_dropout < 0.0 || attention_dropout >= 1.0)
    fail(ErrorKind::Domain, "attention_dropout must lie in [0,1)");
  if (label_smoothing_epsilon < 0.0 || label_smoothing_epsilon >= 1.0)
    fail(ErrorKind::Domain, "label_smoothing_epsilon must lie in [0,1)");
  if (max_positions <= 0) fail(ErrorKind::Domain, "max_positions must be positive");
  if (ffn_hidden_dim < model_dim)
    std::fprintf(stderr, "warning: ffn_hidden_dim %lld < model_dim %lld\n",
                 static_cast<long long>(ffn_hidden_dim), static_cast<long long>(model_dim));
}

namespace {

void add_attn_shapes(std::map<std::string, std::vector<int64_t>>& out, const std::string& prefix,
                     int64_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) out[prefix + "." + w] = {d, d};
  for (const char* b : {"bq", "bk", "bv", "bo"}) out[prefix + "." + b] = {d};
}

void add_norm_shapes(std::map<std::string, std::vector<int64_t>>& out, const std::string& prefix,
                     int64_t d) {
  out[prefix + ".gain"] = {d};
  out[prefix + ".bias"] = {d};
}

void add_ffn_shapes(std::map<std::string, std::vector<int64_t>>& out, const std::string& prefix,
                    int64_t d, int64_t ffn) {
  out[prefix + ".w1"] = {ffn, d};
  out[prefix + ".b1"] = {ffn};
  out[prefix + ".w2"] = {d, ffn};
  out[prefix + ".b2"] = {d};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_bias_name(const std::string& name) {
  auto dot = name.rfind('.');
  std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
  return !last.empty() && last[0] == 'b';  // bias, bq, bk, bv, bo, b1, b2
}

// Sinusoidal position table [len, d]: sin on even columns, cos on odd.
Tensor position_encoding(int64_t len, int64_t d) {
  Tensor pe = Tensor::zeros({len, d});
  for (int64_t pos = 0; pos < len; ++pos) {
    for (int64_t i = 0; i < d; i += 2) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < d) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor causal_mask(int64_t n) {
  Tensor m = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) m.at(i, j) = -1e30;
  return m;
}

using PMap = std::map<std::string, Tape::NodeId>;

Tape::NodeId pnode(const PMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) fail(ErrorKind::Domain, "missing parameter: " + name);
  return it->second;
}

Tape::NodeId linear(Tape& t, Tape::NodeId x, Tape::NodeId w, Tape::NodeId b) {
  return t.add(t.matmul_nt(x, w), b);
}

Tape::NodeId maybe_dropout(Tape& t, Tape::NodeId x, DropoutCtx* dc) {
  if (dc == nullptr || !dc->train || dc->rate <= 0.0) return x;
  GaussianStream gs(mix_seed(dc->seed, dc->counter++));
  const Tensor& v = t.value(x);
  Tensor mask(v.shape, std::vector<double>(static_cast<size_t>(v.numel())));
  double keep = 1.0 / (1.0 - dc->rate);
  for (double& m : mask.data) m = gs.uniform() < dc->rate ? 0.0 : keep;
  return t.mul(x, t.input(std::move(mask)));
}

Tape::NodeId attention(Tape& t, const PMap& p, const std::string& prefix, Tape::NodeId q_in,
                       Tape::NodeId kv_in, int64_t heads, bool causal, DropoutCtx* dc) {
  auto q = linear(t, q_in, pnode(p, prefix + ".wq"), pnode(p, prefix + ".bq"));
  auto k = linear(t, kv_in, pnode(p, prefix + ".wk"), pnode(p, prefix + ".bk"));
  auto v = linear(t, kv_in, pnode(p, prefix + ".wv"), pnode(p, prefix + ".bv"));
  int64_t d = t.value(q).cols();
  int64_t dh = d / heads;
  Tape::NodeId mask = -1;
  if (causal) mask = t.input(causal_mask(t.value(q).rows()));
  std::vector<Tape::NodeId> outs;
  for (int64_t h = 0; h < heads; ++h) {
    auto qh = t.slice(q, 1, h * dh, dh);
    auto kh = t.slice(k, 1, h * dh, dh);
    auto vh = t.slice(v, 1, h * dh, dh);
    auto scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (causal) scores = t.add(scores, mask);
    auto probs = maybe_dropout(t, t.softmax(scores, 1), dc);
    outs.push_back(t.matmul(probs, vh));
  }
  auto merged = heads == 1 ? outs[0] : t.concat(outs, 1);
  return linear(t, merged, pnode(p, prefix + ".wo"), pnode(p, prefix + ".bo"));
}

Tape::NodeId ffn_block(Tape& t, const PMap& p, const std::string& prefix, Tape::NodeId x) {
  auto h = t.relu(linear(t, x, pnode(p, prefix + ".w1"), pnode(p, prefix + ".b1")));
  return linear(t, h, pnode(p, prefix + ".w2"), pnode(p, prefix + ".b2"));
}

Tape::NodeId norm(Tape& t, const PMap& p, const std::string& prefix, Tape::NodeId x) {
  return t.layer_norm(x, pnode(p, prefix + ".gain"), pnode(p, prefix + ".bias"), 1e-5);
}

Tape::NodeId embed(Tape& t, const PMap& p, const ModelConfig& cfg, const std::vector<int32_t>& ids) {
  if (static_cast<int64_t>(ids.size()) > cfg.max_positions)
    fail(ErrorKind::Domain, "sequence length " + std::to_string(ids.size()) +
                                " exceeds max_positions " + std::to_string(cfg.max_positions));
  auto e = t.scale(t.embedding_lookup(pnode(p, "embedding.table"), ids),
                   std::sqrt(static_cast<double>(cfg.model_dim)));
  return t.add(e, t.input(position_encoding(static_cast<int64_t>(ids.size()), cfg.model_dim)));
}

}  // namespace

std::map<std::string, std::vector<int64_t>> expected_param_shapes(const ModelConfig& cfg) {
  std::map<std::string, std::vector<int64_t>> out;
  int64_t d = cfg.model_dim;
  out["embedding.table"] = {cfg.vocab_size, d};
  for (int64_t i = 0; i < cfg.enc_layers; ++i) {
    std::string prefix = "encoder.layer." + std::to_string(i);
    add_attn_shapes(out, prefix + ".attn", d);
    add_norm_shapes(out, prefix + ".attn_norm", d);
    add_ffn_shapes(out, prefix + ".ffn", d, cfg.ffn_hidden_dim);
    add_norm_shapes(out, prefix + ".ffn_norm", d);
  }
  for (int64_t i = 0; i < cfg.dec_layers; ++i) {
    std::string prefix = "decoder.layer." + std::to_string(i);
    add_attn_shapes(out, prefix + ".attn", d);
    add_norm_shapes(out, prefix + ".attn_norm", d);
    add_attn_shapes(out, prefix + ".cross_attn", d);
    add_norm_shapes(out, prefix + ".cross_norm", d);
    add_ffn_shapes(out, prefix + ".ffn", d, cfg.ffn_hidden_dim);
    add_norm_shapes(out, prefix + ".ffn_norm", d);
  }
  add_norm_shapes(out, "encoder.final_norm", d);
  add_norm_shapes(out, "decoder.final_norm", d);
  return out;
}

NamedParamMap init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  NamedParamMap params;
  double std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
  for (const auto& [name, shape] : expected_param_shapes(cfg)) {
    if (ends_with(name, ".gain")) {
      params[name] = Tensor::full(shape, 1.0);
    } else if (is_bias_name(name)) {
      params[name] = Tensor::zeros(shape);
    } else {
      GaussianStream gs(mix_seed(seed, fnv1a(name)));
      params[name] = Tensor::randn(shape, gs, std_dev);
    }
  }
  return params;
}

int64_t param_count(const NamedParamMap& params) {
  int64_t n = 0;
  for (const auto& [name, t] : params) {
    (void)name;
    n += t.numel();
  }
  return n;
}

Batch Batch::from_examples(const std::vector<Example>& examples) {
  Batch b;
  b.size = static_cast<int64_t>(examples.size());
  for (const auto& ex : examples) {
    b.src_len = std::max(b.src_len, static_cast<int64_t>(ex.src.size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<int64_t>(ex.tgt_in.size()));
    if (ex.tgt_in.size() != ex.tgt_out.size())
      fail(ErrorKind::Shape, "tgt_in and tgt_out lengths differ within an example");
  }
  b.src.assign(static_cast<size_t>(b.size * b.src_len), kPadId);
  b.tgt_in.assign(static_cast<size_t>(b.size * b.tgt_len), kPadId);
  b.tgt_out.assign(static_cast<size_t>(b.size * b.tgt_len), kPadId);
  for (int64_t r = 0; r < b.size; ++r) {
    const auto& ex = examples[static_cast<size_t>(r)];
    for (size_t j = 0; j < ex.src.size(); ++j)
      b.src[static_cast<size_t>(r * b.src_len) + j] = ex.src[j];
    for (size_t j = 0; j < ex.tgt_in.size(); ++j) {
      b.tgt_in[static_cast<size_t>(r * b.tgt_len) + j] = ex.tgt_in[j];
      b.tgt_out[static_cast<size_t>(r * b.tgt_len) + j] = ex.tgt_out[j];
    }
  }
  return b;
}

PMap push_params(Tape& tape, const NamedParamMap& params) {
  PMap p;
  for (const auto& [name, tensor] : params) p[name] = tape.input(tensor);
  return p;
}

Tape::NodeId encode_src(Tape& tape, const PMap& p, const ModelConfig& cfg,
                        const std::vector<int32_t>& src, DropoutCtx* dc) {
  auto x = embed(tape, p, cfg, src);
  for (int64_t i = 0; i < cfg.enc_layers; ++i) {
    std::string prefix = "encoder.layer." + std::to_string(i);
    auto normed = norm(tape, p, prefix + ".attn_norm", x);
    x = tape.add(x, attention(tape, p, prefix + ".attn", normed, normed, cfg.heads, false, dc));
    x = tape.add(x, ffn_block(tape, p, prefix + ".ffn", norm(tape, p, prefix + ".ffn_norm", x)));
  }
  return norm(tape, p, "encoder.final_norm", x);
}

Tape::NodeId decode_logits(Tape& tape, const PMap& p, const ModelConfig& cfg, Tape::NodeId enc_out,
                           const std::vector<int32_t>& tgt_in, DropoutCtx* dc) {
  auto x = embed(tape, p, cfg, tgt_in);
  for (int64_t i = 0; i < cfg.dec_layers; ++i) {
    std::string prefix = "decoder.layer." + std::to_string(i);
    auto normed = norm(tape, p, prefix + ".attn_norm", x);
    x = tape.add(x, attention(tape, p, prefix + ".attn", normed, normed, cfg.heads, true, dc));
    x = tape.add(x, attention(tape, p, prefix + ".cross_attn",
                              norm(tape, p, prefix + ".cross_norm", x), enc_out, cfg.heads, false, dc));
    x = tape.add(x, ffn_block(tape, p, prefix + ".ffn", norm(tape, p, prefix + ".ffn_norm", x)));
  }
  x = norm(tape, p, "decoder.final_norm", x);
  return tape.matmul_nt(x, pnode(p, "embedding.table"));
}

namespace {

std::vector<int32_t> strip_pads(const std::vector<int32_t>& row, int64_t begin, int64_t len) {
  std::vector<int32_t> out;
  for (int64_t j = 0; j < len; ++j) {
    int32_t id = row[static_cast<size_t>(begin + j)];
    if (id != kPadId) out.push_back(id);
  }
  return out;
}

}  // namespace

Tape::NodeId forward_loss_node(Tape& tape, const PMap& p, const ModelConfig& cfg, const Batch& batch,
                               DropoutCtx* dc, int64_t* token_count) {
  // Per-sentence losses are means over that sentence's targets; weighting by
  // token share makes the combined node the mean over every non-pad target,
  // independent of batch row order.
  std::vector<Tape::NodeId> losses;
  std::vector<int64_t> counts;
  int64_t total = 0;
  for (int64_t r = 0; r < batch.size; ++r) {
    auto src = strip_pads(batch.src, r * batch.src_len, batch.src_len);
    auto tgt_in = strip_pads(batch.tgt_in, r * batch.tgt_len, batch.tgt_len);
    auto tgt_out = strip_pads(batch.tgt_out, r * batch.tgt_len, batch.tgt_len);
    if (src.empty() || tgt_in.empty() || tgt_out.empty()) continue;
    if (tgt_in.size() != tgt_out.size())
      fail(ErrorKind::Shape, "row " + std::to_string(r) + ": tgt_in/tgt_out length mismatch");
    auto enc_out = encode_src(tape, p, cfg, src, dc);
    auto logits = decode_logits(tape, p, cfg, enc_out, tgt_in, dc);
    int64_t n = 0;
    auto loss = tape.label_smoothed_nll(logits, tgt_out, cfg.label_smoothing_epsilon, kPadId, &n);
    if (n == 0) continue;
    losses.push_back(loss);
    counts.push_back(n);
    total += n;
  }
  if (token_count != nullptr) *token_count = total;
  if (total == 0) return tape.input(Tensor::zeros({1}));
  Tape::NodeId acc = -1;
  for (size_t i = 0; i < losses.size(); ++i) {
    auto weighted =
        tape.scale(losses[i], static_cast<double>(counts[i]) / static_cast<double>(total));
    acc = (acc == -1) ? weighted : tape.add(acc, weighted);
  }
  return acc;
}

LossResult forward_loss(const NamedParamMap& params, const ModelConfig& cfg, const Batch& batch,
                        bool train, uint64_t dropout_seed) {
  Tape tape(false);
  auto p = push_params(tape, params);
  DropoutCtx dc{train, cfg.attention_dropout, dropout_seed, 0};
  LossResult r;
  auto node = forward_loss_node(tape, p, cfg, batch, &dc, &r.tokens);
  r.loss = tape.scalar_value(node);
  return r;
}

}  // namespace mtgrow
