#include <cmath>

#include "doctest.h"
#include "mtgrow/decode.hpp"
#include "mtgrow/vocab.hpp"

using namespace mtgrow;

namespace {

ModelConfig engine_config(int64_t vocab = 16) {
  ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.model_dim = 8;
  cfg.ffn_hidden_dim = 16;
  cfg.heads = 2;
  cfg.vocab_size = vocab;
  cfg.attention_dropout = 0.0;
  cfg.max_positions = 32;
  return cfg;
}

std::vector<double> log_softmax_row(const Tensor& logits, int64_t row) {
  std::vector<double> out(static_cast<size_t>(logits.cols()));
  double mx = logits.at(row, 0);
  for (int64_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits.at(row, c));
  double z = 0.0;
  for (int64_t c = 0; c < logits.cols(); ++c) z += std::exp(logits.at(row, c) - mx);
  double logz = mx + std::log(z);
  for (int64_t c = 0; c < logits.cols(); ++c) out[static_cast<size_t>(c)] = logits.at(row, c) - logz;
  return out;
}

}  // namespace

TEST_CASE("incremental engine matches the taped decoder to 1e-10") {
  ModelConfig cfg = engine_config();
  auto params = init_model(cfg, 501);
  std::vector<int32_t> src{4, 9, 11, kEosId};
  std::vector<int32_t> tgt_in{kBosId, 5, 6, 12, 7};

  Tape tape(false);
  auto p = push_params(tape, params);
  auto enc = encode_src(tape, p, cfg, src, nullptr);
  const Tensor& logits = tape.value(decode_logits(tape, p, cfg, enc, tgt_in, nullptr));

  InferenceEngine engine(params, cfg, src);
  auto state = engine.new_state();
  double worst = 0.0;
  for (size_t t = 0; t < tgt_in.size(); ++t) {
    auto lp = engine.step(state, tgt_in[t]);
    auto want = log_softmax_row(logits, static_cast<int64_t>(t));
    for (size_t v = 0; v < lp.size(); ++v) worst = std::max(worst, std::fabs(lp[v] - want[v]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("engine rejects bad tokens and overlong prefixes") {
  ModelConfig cfg = engine_config();
  cfg.max_positions = 2;
  auto params = init_model(cfg, 502);
  InferenceEngine engine(params, cfg, {4, kEosId});
  auto state = engine.new_state();
  CHECK_THROWS_AS(engine.step(state, 16), Error);
  engine.step(state, kBosId);
  engine.step(state, 5);
  CHECK_THROWS_AS(engine.step(state, 6), Error);
}

TEST_CASE("beam 1 equals greedy decoding token for token") {
  ModelConfig cfg = engine_config();
  auto params = init_model(cfg, 503);
  std::vector<int32_t> src{6, 10, kEosId};
  std::vector<int32_t> prefix{4};
  int64_t max_len = 8;

  InferenceEngine engine(params, cfg, src);
  auto state = engine.new_state();
  auto lp = engine.step(state, kBosId);
  for (int32_t t : prefix) lp = engine.step(state, t);
  std::vector<int32_t> greedy;
  for (int64_t s = 0; s < max_len; ++s) {
    int32_t best = 0;
    for (int32_t v = 1; v < cfg.vocab_size; ++v)
      if (lp[static_cast<size_t>(v)] > lp[static_cast<size_t>(best)]) best = v;
    if (best == kEosId) break;
    greedy.push_back(best);
    if (s + 1 < max_len) lp = engine.step(state, best);
  }

  auto beamed = decode_beam(params, cfg, src, prefix, 1, max_len, 1.0);
  CHECK(beamed == greedy);
}

TEST_CASE("repeated decode_beam calls are identical") {
  ModelConfig cfg = engine_config();
  auto params = init_model(cfg, 504);
  std::vector<int32_t> src{7, 8, kEosId};
  auto a = decode_beam(params, cfg, src, {5}, 4, 10, 1.0);
  auto b = decode_beam(params, cfg, src, {5}, 4, 10, 1.0);
  CHECK(a == b);
}

TEST_CASE("decode_beam validates beam and max_len") {
  ModelConfig cfg = engine_config();
  auto params = init_model(cfg, 505);
  CHECK_THROWS_AS(decode_beam(params, cfg, {4, kEosId}, {}, 0, 5, 1.0), Error);
  CHECK_THROWS_AS(decode_beam(params, cfg, {4, kEosId}, {}, 2, 0, 1.0), Error);
}

TEST_CASE("wide beam equals exhaustive enumeration argmax") {
  // V=8, max_len=3, beam=8*V: the beam keeps every candidate until the last
  // expansion, where penalized scores are monotone in raw logprob at fixed
  // length, so it provably contains the global argmax.
  ModelConfig cfg = engine_config(8);
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  auto params = init_model(cfg, 506);
  std::vector<int32_t> src{5, 7, kEosId};
  std::vector<int32_t> prefix{6};
  int64_t max_len = 3;

  // Teacher-forced scoring through the taped model: an independent path from
  // the incremental engine the beam uses.
  Tape tape(false);
  auto p = push_params(tape, params);
  auto enc = encode_src(tape, p, cfg, src, nullptr);
  auto score_seq = [&](const std::vector<int32_t>& scored) {
    std::vector<int32_t> tgt_in{kBosId};
    tgt_in.insert(tgt_in.end(), prefix.begin(), prefix.end());
    tgt_in.insert(tgt_in.end(), scored.begin(), scored.end() - 1);
    const Tensor& logits = tape.value(decode_logits(tape, p, cfg, enc, tgt_in, nullptr));
    double lp = 0.0;
    int64_t first = static_cast<int64_t>(prefix.size());
    for (size_t t = 0; t < scored.size(); ++t) {
      auto row = log_softmax_row(logits, first + static_cast<int64_t>(t));
      lp += row[static_cast<size_t>(scored[t])];
    }
    return lp;
  };

  for (double penalty : {1.0, 0.6, 2.0}) {
    std::vector<int32_t> best_seq;
    double best_score = -1e300;
    bool have = false;
    auto consider = [&](const std::vector<int32_t>& free, bool terminated) {
      std::vector<int32_t> scored = free;
      if (terminated) scored.push_back(kEosId);
      double s = score_seq(scored) /
                 std::pow(static_cast<double>(scored.size()), penalty);
      if (!have || s > best_score ||
          (s == best_score &&
           std::lexicographical_compare(free.begin(), free.end(), best_seq.begin(), best_seq.end()))) {
        have = true;
        best_score = s;
        best_seq = free;
      }
    };
    // all sequences over the non-eos alphabet: length <= 2 terminated by eos,
    // length exactly 3 truncated
    std::vector<int32_t> alphabet;
    for (int32_t v = 0; v < 8; ++v)
      if (v != kEosId) alphabet.push_back(v);
    consider({}, true);
    for (int32_t a : alphabet) {
      consider({a}, true);
      for (int32_t b : alphabet) {
        consider({a, b}, true);
        for (int32_t c : alphabet) consider({a, b, c}, false);
      }
    }

    auto beamed = decode_beam(params, cfg, src, prefix, 8 * 8, max_len, penalty);
    CHECK(beamed == best_seq);
  }
}
