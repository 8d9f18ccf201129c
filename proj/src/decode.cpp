#include "mtgrow/decode.hpp"

#include <algorithm>
#include <cmath>

#include "mtgrow/vocab.hpp"

namespace mtgrow {

namespace {

// out[o] = sum_i W[o,i] * x[i] + b[o]
void linear_vec(const Tensor& w, const Tensor& b, const double* x, double* out) {
  int64_t rows = w.rows(), cols = w.cols();
  for (int64_t o = 0; o < rows; ++o) {
    double acc = b.data[static_cast<size_t>(o)];
    const double* wr = &w.data[static_cast<size_t>(o * cols)];
    for (int64_t i = 0; i < cols; ++i) acc += wr[i] * x[i];
    out[static_cast<size_t>(o)] = acc;
  }
}

std::vector<double> layer_norm_vec(const double* x, int64_t d, const Tensor& gain,
                                   const Tensor& bias, double eps) {
  double mean = 0.0;
  for (int64_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (int64_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(d);
  double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i)
    out[static_cast<size_t>(i)] =
        (x[i] - mean) * inv * gain.data[static_cast<size_t>(i)] + bias.data[static_cast<size_t>(i)];
  return out;
}

void softmax_inplace(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

std::vector<double> sinusoid_row(int64_t pos, int64_t d) {
  std::vector<double> pe(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < d; i += 2) {
    double angle = static_cast<double>(pos) /
                   std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
    pe[static_cast<size_t>(i)] = std::sin(angle);
    if (i + 1 < d) pe[static_cast<size_t>(i + 1)] = std::cos(angle);
  }
  return pe;
}

const Tensor* want(const NamedParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) fail(ErrorKind::Domain, "missing parameter: " + name);
  return &it->second;
}

// Attend one query over cached keys/values laid out [rows, d], head-sliced.
std::vector<double> attend_cached(const std::vector<double>& q, const std::vector<double>& keys,
                                  const std::vector<double>& values, int64_t rows, int64_t d,
                                  int64_t heads) {
  int64_t dh = d / heads;
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  std::vector<double> scores(static_cast<size_t>(rows));
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t h = 0; h < heads; ++h) {
    int64_t off = h * dh;
    for (int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      const double* kr = &keys[static_cast<size_t>(r * d + off)];
      for (int64_t i = 0; i < dh; ++i) s += q[static_cast<size_t>(off + i)] * kr[i];
      scores[static_cast<size_t>(r)] = s * inv_sqrt;
    }
    softmax_inplace(scores);
    for (int64_t r = 0; r < rows; ++r) {
      double p = scores[static_cast<size_t>(r)];
      const double* vr = &values[static_cast<size_t>(r * d + off)];
      for (int64_t i = 0; i < dh; ++i) out[static_cast<size_t>(off + i)] += p * vr[i];
    }
  }
  return out;
}

}  // namespace

InferenceEngine::InferenceEngine(const NamedParamMap& params, const ModelConfig& cfg,
                                 const std::vector<int32_t>& src)
    : params_(params), cfg_(cfg) {
  cfg_.validate();
  embedding_ = want(params_, "embedding.table");
  auto norm_refs = [&](const std::string& prefix) {
    return NormRefs{want(params_, prefix + ".gain"), want(params_, prefix + ".bias")};
  };
  auto attn_refs = [&](const std::string& prefix) {
    return AttnRefs{want(params_, prefix + ".wq"), want(params_, prefix + ".wk"),
                    want(params_, prefix + ".wv"), want(params_, prefix + ".wo"),
                    want(params_, prefix + ".bq"), want(params_, prefix + ".bk"),
                    want(params_, prefix + ".bv"), want(params_, prefix + ".bo")};
  };
  for (int64_t i = 0; i < cfg_.dec_layers; ++i) {
    std::string prefix = "decoder.layer." + std::to_string(i);
    DecLayer l;
    l.self = attn_refs(prefix + ".attn");
    l.cross = attn_refs(prefix + ".cross_attn");
    l.self_norm = norm_refs(prefix + ".attn_norm");
    l.cross_norm = norm_refs(prefix + ".cross_norm");
    l.ffn_norm = norm_refs(prefix + ".ffn_norm");
    l.w1 = want(params_, prefix + ".ffn.w1");
    l.b1 = want(params_, prefix + ".ffn.b1");
    l.w2 = want(params_, prefix + ".ffn.w2");
    l.b2 = want(params_, prefix + ".ffn.b2");
    layers_.push_back(l);
  }
  final_norm_ = norm_refs("decoder.final_norm");

  // Encoder runs once; reuse the taped implementation in value-only mode.
  Tape tape(false);
  auto p = push_params(tape, params_);
  const Tensor& enc = tape.value(encode_src(tape, p, cfg_, src, nullptr));
  enc_out_ = enc.data;
  src_len_ = enc.rows();

  int64_t d = cfg_.model_dim;
  k_cross_.resize(static_cast<size_t>(cfg_.dec_layers));
  v_cross_.resize(static_cast<size_t>(cfg_.dec_layers));
  for (int64_t i = 0; i < cfg_.dec_layers; ++i) {
    const auto& cr = layers_[static_cast<size_t>(i)].cross;
    auto& kc = k_cross_[static_cast<size_t>(i)];
    auto& vc = v_cross_[static_cast<size_t>(i)];
    kc.resize(static_cast<size_t>(src_len_ * d));
    vc.resize(static_cast<size_t>(src_len_ * d));
    for (int64_t r = 0; r < src_len_; ++r) {
      const double* x = &enc_out_[static_cast<size_t>(r * d)];
      linear_vec(*cr.wk, *cr.bk, x, &kc[static_cast<size_t>(r * d)]);
      linear_vec(*cr.wv, *cr.bv, x, &vc[static_cast<size_t>(r * d)]);
    }
  }
}

InferenceEngine::State InferenceEngine::new_state() const {
  State s;
  s.k_self.resize(static_cast<size_t>(cfg_.dec_layers));
  s.v_self.resize(static_cast<size_t>(cfg_.dec_layers));
  return s;
}

std::vector<double> InferenceEngine::step(State& state, int32_t token) const {
  int64_t d = cfg_.model_dim;
  if (token < 0 || token >= cfg_.vocab_size)
    fail(ErrorKind::Vocab, "step: token id " + std::to_string(token) + " outside vocab");
  if (state.steps >= cfg_.max_positions)
    fail(ErrorKind::Domain, "step: decoder position exceeds max_positions");

  // embedding * sqrt(d) + position encoding
  std::vector<double> x(static_cast<size_t>(d));
  double scale = std::sqrt(static_cast<double>(d));
  const double* row = &embedding_->data[static_cast<size_t>(token) * static_cast<size_t>(d)];
  auto pe = sinusoid_row(state.steps, d);
  for (int64_t i = 0; i < d; ++i)
    x[static_cast<size_t>(i)] = row[i] * scale + pe[static_cast<size_t>(i)];

  std::vector<double> q(static_cast<size_t>(d)), k(static_cast<size_t>(d)),
      v(static_cast<size_t>(d)), proj(static_cast<size_t>(d));
  for (int64_t li = 0; li < cfg_.dec_layers; ++li) {
    const DecLayer& l = layers_[static_cast<size_t>(li)];

    // causal self-attention over the growing cache (current token included)
    auto normed = layer_norm_vec(x.data(), d, *l.self_norm.gain, *l.self_norm.bias, 1e-5);
    linear_vec(*l.self.wq, *l.self.bq, normed.data(), q.data());
    linear_vec(*l.self.wk, *l.self.bk, normed.data(), k.data());
    linear_vec(*l.self.wv, *l.self.bv, normed.data(), v.data());
    auto& kc = state.k_self[static_cast<size_t>(li)];
    auto& vc = state.v_self[static_cast<size_t>(li)];
    kc.insert(kc.end(), k.begin(), k.end());
    vc.insert(vc.end(), v.begin(), v.end());
    auto att = attend_cached(q, kc, vc, state.steps + 1, d, cfg_.heads);
    linear_vec(*l.self.wo, *l.self.bo, att.data(), proj.data());
    for (int64_t i = 0; i < d; ++i) x[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];

    // cross-attention over the precomputed encoder keys/values
    normed = layer_norm_vec(x.data(), d, *l.cross_norm.gain, *l.cross_norm.bias, 1e-5);
    linear_vec(*l.cross.wq, *l.cross.bq, normed.data(), q.data());
    att = attend_cached(q, k_cross_[static_cast<size_t>(li)], v_cross_[static_cast<size_t>(li)],
                        src_len_, d, cfg_.heads);
    linear_vec(*l.cross.wo, *l.cross.bo, att.data(), proj.data());
    for (int64_t i = 0; i < d; ++i) x[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];

    // feed-forward
    normed = layer_norm_vec(x.data(), d, *l.ffn_norm.gain, *l.ffn_norm.bias, 1e-5);
    std::vector<double> hidden(static_cast<size_t>(cfg_.ffn_hidden_dim));
    linear_vec(*l.w1, *l.b1, normed.data(), hidden.data());
    for (double& h : hidden) h = h > 0 ? h : 0.0;
    linear_vec(*l.w2, *l.b2, hidden.data(), proj.data());
    for (int64_t i = 0; i < d; ++i) x[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];
  }

  auto normed = layer_norm_vec(x.data(), d, *final_norm_.gain, *final_norm_.bias, 1e-5);
  // logits through the tied table, then log-softmax
  std::vector<double> logits(static_cast<size_t>(cfg_.vocab_size));
  for (int64_t t = 0; t < cfg_.vocab_size; ++t) {
    const double* er = &embedding_->data[static_cast<size_t>(t) * static_cast<size_t>(d)];
    double s = 0.0;
    for (int64_t i = 0; i < d; ++i) s += normed[static_cast<size_t>(i)] * er[i];
    logits[static_cast<size_t>(t)] = s;
  }
  double mx = logits[0];
  for (double s : logits) mx = std::max(mx, s);
  double z = 0.0;
  for (double s : logits) z += std::exp(s - mx);
  double logz = mx + std::log(z);
  for (double& s : logits) s -= logz;

  state.steps += 1;
  return logits;
}

namespace {

struct Hyp {
  std::vector<int32_t> tokens;  // freely generated, no prefix, no eos
  double logprob = 0.0;
  InferenceEngine::State state;
  std::vector<double> next_logprobs;
};

bool lex_less(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<int32_t> decode_beam(const NamedParamMap& params, const ModelConfig& cfg,
                                 const std::vector<int32_t>& src_ids,
                                 const std::vector<int32_t>& forced_prefix, int64_t beam,
                                 int64_t max_len, double length_penalty) {
  if (beam < 1) fail(ErrorKind::Domain, "decode_beam: beam must be >= 1");
  if (max_len < 1) fail(ErrorKind::Domain, "decode_beam: max_len must be >= 1");
  InferenceEngine engine(params, cfg, src_ids);

  Hyp root;
  root.state = engine.new_state();
  root.next_logprobs = engine.step(root.state, kBosId);
  for (int32_t tok : forced_prefix) root.next_logprobs = engine.step(root.state, tok);

  struct Done {
    std::vector<int32_t> tokens;
    double score;
  };
  std::vector<Done> finished;  // uncapped: every eos hypothesis is kept
  auto finish = [&](const Hyp& h, int64_t scored_steps) {
    finished.push_back(
        {h.tokens, h.logprob / std::pow(static_cast<double>(scored_steps), length_penalty)});
  };

  std::vector<Hyp> live{std::move(root)};
  for (int64_t step = 1; step <= max_len && !live.empty(); ++step) {
    struct Cand {
      size_t parent;
      int32_t token;
      double logprob;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<size_t>(cfg.vocab_size));
    for (size_t i = 0; i < live.size(); ++i)
      for (int32_t t = 0; t < cfg.vocab_size; ++t)
        cands.push_back({i, t, live[i].logprob + live[i].next_logprobs[static_cast<size_t>(t)]});
    size_t keep = std::min(cands.size(), static_cast<size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<int64_t>(keep), cands.end(),
                      [&](const Cand& a, const Cand& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        const auto& ta = live[a.parent].tokens;
                        const auto& tb = live[b.parent].tokens;
                        if (ta != tb) return lex_less(ta, tb);
                        return a.token < b.token;
                      });
    cands.resize(keep);

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      const Hyp& parent = live[c.parent];
      if (c.token == kEosId) {
        Hyp h;
        h.tokens = parent.tokens;
        h.logprob = c.logprob;
        finish(h, step);
        continue;
      }
      if (step == max_len) {
        // out of budget: truncated hypothesis competes with its current score
        Hyp h;
        h.tokens = parent.tokens;
        h.tokens.push_back(c.token);
        h.logprob = c.logprob;
        finish(h, step);
        continue;
      }
      Hyp h;
      h.tokens = parent.tokens;
      h.tokens.push_back(c.token);
      h.logprob = c.logprob;
      h.state = parent.state;  // copy: siblings branch from the same cache
      h.next_logprobs = engine.step(h.state, c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }

  if (finished.empty()) return {};  // max_len < 1 is rejected above; unreachable
  const Done* best = &finished[0];
  for (const Done& d : finished)
    if (d.score > best->score || (d.score == best->score && lex_less(d.tokens, best->tokens)))
      best = &d;
  return best->tokens;
}

}  // namespace mtgrow
