#include "mtgrow/probes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtgrow/checkpoint.hpp"
#include "mtgrow/model.hpp"
#include "mtgrow/surgery.hpp"

using namespace mtgrow;

namespace {

ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Domain;
}

Vocab make_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> toks = {"<pad>", "<unk>", "<bos>", "<eos>", "<lang:aa>"};
  toks.insert(toks.end(), words.begin(), words.end());
  return Vocab::from_tokens(toks);
}

Checkpoint make_ckpt(const Vocab& vocab, int64_t enc = 1, int64_t dec = 1, int64_t ffn = 6,
                     uint64_t seed = 11) {
  ModelConfig cfg;
  cfg.enc_layers = enc;
  cfg.dec_layers = dec;
  cfg.model_dim = 8;
  cfg.ffn_hidden_dim = ffn;
  cfg.heads = 2;
  cfg.vocab_size = vocab.size();
  cfg.max_positions = 32;
  Checkpoint c;
  c.config = cfg;
  c.vocab = vocab;
  c.params = init_model(cfg, seed);
  c.step = 3;
  return c;
}

void add_moments(Checkpoint& c, uint64_t seed = 99) {
  GaussianStream gs(seed);
  for (const auto& [name, t] : c.params) {
    c.adam_m[name] = Tensor::randn(t.shape, gs, 0.1);
    c.adam_v[name] = Tensor::randn(t.shape, gs, 0.1);
  }
}

Tensor scalar_matrix(double v) {
  Tensor t = Tensor::zeros({1, 1});
  t.data[0] = v;
  return t;
}

// Per-token negative log-likelihood through prefix truncation: causality makes
// the logits at position t identical whether the suffix is present or not, so
// NLL_t = (t+1)·L_{t+1} − t·L_t with L_k the mean loss over the k-prefix.
double token_nll(const NamedParamMap& params, const ModelConfig& cfg, const Example& ex,
                 size_t pos) {
  auto prefix_loss = [&](size_t k) {
    Example p;
    p.src = ex.src;
    p.tgt_in.assign(ex.tgt_in.begin(), ex.tgt_in.begin() + static_cast<int64_t>(k));
    p.tgt_out.assign(ex.tgt_out.begin(), ex.tgt_out.begin() + static_cast<int64_t>(k));
    return forward_loss(params, cfg, Batch::from_examples({p}), false, 0).loss;
  };
  double upto = static_cast<double>(pos + 1) * prefix_loss(pos + 1);
  double before = pos == 0 ? 0.0 : static_cast<double>(pos) * prefix_loss(pos);
  return upto - before;
}

}  // namespace

TEST_CASE("drift_row: scalar matrices give the hand distances") {
  DriftRow r = drift_row("encoder", 0, "w1", scalar_matrix(0.0), scalar_matrix(3.0),
                         scalar_matrix(7.0));
  CHECK(r.d_m1_m == 3.0);
  CHECK(r.d_m2_m == 7.0);
  CHECK(r.d_m1_m2 == 4.0);
  CHECK(r.stack == "encoder");
  CHECK(r.matrix == "w1");
}

TEST_CASE("norm_drift: zero-noise concat widening drifts nowhere") {
  Checkpoint seed = make_ckpt(make_vocab({"a", "b", "c"}), 2, 1);
  GrowthPlan plan;
  plan.target_vocab = seed.vocab;
  plan.width.factor = 2;
  plan.width.init = WidthInit::ConcatNoise;
  plan.width.noise_std = 0.0;
  plan.width.norm = NormMode::None;
  plan.seed = 4;
  auto [grown, report] = grow(seed, plan);

  NormDriftReport drift = norm_drift(seed, grown, report);
  REQUIRE(drift.rows.size() == 6);  // 3 layers x {w1, w2}
  for (const DriftRow& r : drift.rows) {
    CHECK(r.d_m1_m == 0.0);
    CHECK(r.d_m2_m == 0.0);
    CHECK(r.d_m1_m2 == 0.0);
  }
}

TEST_CASE("norm_drift: injected noise is reproducible from the seed stream") {
  Checkpoint seed = make_ckpt(make_vocab({"a", "b", "c"}), 1, 1);
  const double noise_std = 0.01;
  GrowthPlan plan;
  plan.target_vocab = seed.vocab;
  plan.width.factor = 2;
  plan.width.init = WidthInit::ConcatNoise;
  plan.width.noise_std = noise_std;
  plan.width.norm = NormMode::None;
  plan.seed = 13;
  auto [grown, report] = grow(seed, plan);
  NormDriftReport drift = norm_drift(seed, grown, report);

  int64_t h = seed.config.ffn_hidden_dim, d = seed.config.model_dim;
  for (const std::string& prefix : {std::string("encoder.layer.0"), std::string("decoder.layer.0")}) {
    // regenerate the layer stream: W1 block, then b1, then W2 block
    GaussianStream gs(mix_seed(plan.seed, fnv1a(prefix + ".ffn")));
    double w1_sq = 0.0, w2_sq = 0.0;
    for (int64_t i = 0; i < h * d; ++i) {
      double n = gs.next() * noise_std;
      w1_sq += n * n;
    }
    for (int64_t i = 0; i < h; ++i) gs.next();
    for (int64_t i = 0; i < d * h; ++i) {
      double n = gs.next() * noise_std;
      w2_sq += n * n;
    }

    std::string stack = prefix.substr(0, prefix.find('.'));
    for (const DriftRow& r : drift.rows) {
      if (r.stack != stack) continue;
      double expected = std::sqrt(r.matrix == "w1" ? w1_sq : w2_sq);
      CHECK(r.d_m1_m == 0.0);
      CHECK(r.d_m1_m2 == doctest::Approx(expected).epsilon(1e-9));
      CHECK(r.d_m2_m == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("norm_drift: frobenius matching shows up as M1 drift") {
  Checkpoint seed = make_ckpt(make_vocab({"a"}), 1, 1);
  GrowthPlan plan;
  plan.target_vocab = seed.vocab;
  plan.width.factor = 2;
  plan.width.init = WidthInit::ConcatNoise;
  plan.width.noise_std = 0.0;
  plan.width.norm = NormMode::FrobeniusMatch;
  plan.seed = 2;
  auto [grown, report] = grow(seed, plan);
  NormDriftReport drift = norm_drift(seed, grown, report);
  for (const DriftRow& r : drift.rows) {
    if (r.matrix == "w1") {
      CHECK(r.d_m1_m == 0.0);  // W1 is never rescaled
    } else {
      // both halves were scaled by 1/sqrt(2), so M1 = M/sqrt(2)
      const Tensor& m = seed.params.at(r.stack + ".layer.0.ffn.w2");
      double expected = std::abs(1.0 - 1.0 / std::sqrt(2.0)) * frobenius_norm(m);
      CHECK(r.d_m1_m == doctest::Approx(expected).epsilon(1e-9));
      CHECK(r.d_m1_m2 == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("norm_drift: triangle inequality and report serialization") {
  Checkpoint seed = make_ckpt(make_vocab({"a", "b"}), 2, 2);
  GrowthPlan plan;
  plan.target_vocab = seed.vocab;
  plan.width.factor = 2;
  plan.width.noise_std = 0.05;
  plan.width.norm = NormMode::FrobeniusMatch;
  plan.seed = 77;
  auto [grown, report] = grow(seed, plan);

  // simulate training drift on both blocks
  GaussianStream gs(5);
  for (const std::string& prefix : ffn_prefixes(grown.config))
    for (const std::string& suffix : {std::string(".ffn.w1"), std::string(".ffn.w2")}) {
      Tensor& t = grown.params.at(prefix + suffix);
      for (double& x : t.data) x += gs.next() * 0.02;
    }

  NormDriftReport drift = norm_drift(seed, grown, report);
  REQUIRE(drift.rows.size() == 8);
  for (const DriftRow& r : drift.rows) {
    CHECK(r.d_m1_m >= 0.0);
    CHECK(r.d_m2_m >= 0.0);
    CHECK(r.d_m1_m2 <= r.d_m1_m + r.d_m2_m + 1e-12);
    CHECK(r.d_m1_m2 >= std::abs(r.d_m1_m - r.d_m2_m) - 1e-12);
  }

  std::string csv = drift.to_csv();
  CHECK(csv.rfind("stack,layer,matrix,d_M1_M,d_M2_M,d_M1_M2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  nlohmann::json j = drift.to_json();
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 8);
  CHECK(j[0]["stack"] == drift.rows[0].stack);
  CHECK(j[0]["d_M1_M2"].get<double>() == drift.rows[0].d_m1_m2);
}

TEST_CASE("norm_drift: refuses anything that is not a doubled concat widening") {
  Checkpoint seed = make_ckpt(make_vocab({"a"}), 1, 1);
  GrowthPlan doubled;
  doubled.target_vocab = seed.vocab;
  doubled.width.factor = 2;
  doubled.width.norm = NormMode::None;
  auto [grown, report] = grow(seed, doubled);

  // tripled hidden dim
  GrowthPlan tripled = doubled;
  tripled.width.factor = 3;
  auto [wide3, report3] = grow(seed, tripled);
  CHECK(error_kind([&] { norm_drift(seed, wide3, report3); }) == ErrorKind::Domain);

  // deepened on top of widened
  GrowthPlan deep = doubled;
  deep.depth.enc_count = 1;
  auto [grown_deep, report_deep] = grow(seed, deep);
  CHECK(error_kind([&] { norm_drift(seed, grown_deep, report_deep); }) == ErrorKind::Domain);

  // partition missing from the report
  SurgeryReport missing = report;
  missing.tensors.erase("encoder.layer.0.ffn.w1");
  CHECK(error_kind([&] { norm_drift(seed, grown, missing); }) == ErrorKind::Domain);

  // interleaved partition from linear_interp is not a concat layout
  GrowthPlan interp = doubled;
  interp.width.init = WidthInit::LinearInterp;
  auto [grown_li, report_li] = grow(seed, interp);
  CHECK(error_kind([&] { norm_drift(seed, grown_li, report_li); }) == ErrorKind::Domain);
}

TEST_CASE("substitute_embeddings: untrained bijective remap round-trips the seed") {
  Vocab old_vocab = make_vocab({"red", "green", "blue"});
  Vocab new_vocab = make_vocab({"blue", "red", "green"});
  Checkpoint seed = make_ckpt(old_vocab);
  add_moments(seed);

  VocabMapping mapping = overlap_map(old_vocab, new_vocab);
  CHECK(mapping.coverage == 1.0);
  Checkpoint grown = remap_embeddings(seed, new_vocab, mapping, EmbeddingInit::UnkCopy, 21);

  Checkpoint back = substitute_embeddings(seed, grown, mapping);
  CHECK(checkpoint_equal(back, seed));
}

TEST_CASE("substitute_embeddings: only the mapped rows change") {
  Vocab old_vocab = make_vocab({"red", "green", "blue"});
  Vocab new_vocab = make_vocab({"green", "blue", "violet"});
  Checkpoint seed = make_ckpt(old_vocab);
  add_moments(seed);

  VocabMapping mapping = overlap_map(old_vocab, new_vocab);
  Checkpoint grown = remap_embeddings(seed, new_vocab, mapping, EmbeddingInit::UnkCopy, 21);
  // stand-in for continual training
  GaussianStream gs(3);
  for (double& x : grown.params.at("embedding.table").data) x += gs.next();
  for (double& x : grown.params.at("encoder.layer.0.ffn.w1").data) x += gs.next();

  Checkpoint sub = substitute_embeddings(seed, grown, mapping);

  int64_t d = seed.config.model_dim;
  const Tensor& seed_emb = seed.params.at("embedding.table");
  const Tensor& grown_emb = grown.params.at("embedding.table");
  const Tensor& sub_emb = sub.params.at("embedding.table");
  std::vector<bool> mapped(static_cast<size_t>(seed_emb.rows()), false);
  for (const auto& [old_id, new_id] : mapping.pairs) {
    mapped[static_cast<size_t>(old_id)] = true;
    for (int64_t c = 0; c < d; ++c) CHECK(sub_emb.at(old_id, c) == grown_emb.at(new_id, c));
  }
  CHECK(std::count(mapped.begin(), mapped.end(), false) == 1);  // only "red" is unmapped
  for (int64_t r = 0; r < seed_emb.rows(); ++r)
    if (!mapped[static_cast<size_t>(r)])
      for (int64_t c = 0; c < d; ++c) CHECK(sub_emb.at(r, c) == seed_emb.at(r, c));

  // everything outside the table is the untouched seed state
  for (const auto& [name, t] : seed.params)
    if (name != "embedding.table") CHECK(bitwise_equal(sub.params.at(name), t));
  CHECK(bitwise_equal(sub.adam_m.at("embedding.table"), seed.adam_m.at("embedding.table")));
  CHECK(sub.step == seed.step);
  CHECK(sub.vocab.size() == seed.vocab.size());
}

TEST_CASE("substitute_embeddings: rejects bad mappings") {
  Checkpoint seed = make_ckpt(make_vocab({"a", "b"}));
  Checkpoint grown = seed;

  VocabMapping out_of_range;
  out_of_range.pairs = {{0, seed.vocab.size()}};
  CHECK(error_kind([&] { substitute_embeddings(seed, grown, out_of_range); }) == ErrorKind::Vocab);
  out_of_range.pairs = {{-1, 0}};
  CHECK(error_kind([&] { substitute_embeddings(seed, grown, out_of_range); }) == ErrorKind::Vocab);

  VocabMapping dup_old;
  dup_old.pairs = {{4, 4}, {4, 5}};
  CHECK(error_kind([&] { substitute_embeddings(seed, grown, dup_old); }) == ErrorKind::Vocab);
  VocabMapping dup_new;
  dup_new.pairs = {{4, 4}, {5, 4}};
  CHECK(error_kind([&] { substitute_embeddings(seed, grown, dup_new); }) == ErrorKind::Vocab);

  Checkpoint narrow = make_ckpt(make_vocab({"a", "b"}));
  narrow.config.model_dim = 4;
  narrow.params = init_model(narrow.config, 2);
  VocabMapping identity;
  identity.pairs = {{0, 0}};
  CHECK(error_kind([&] { substitute_embeddings(seed, narrow, identity); }) == ErrorKind::Shape);
}

TEST_CASE("fisher: zeroed query projection makes the key gradients exactly zero") {
  Vocab vocab = make_vocab({"u", "v", "w"});
  Checkpoint ckpt = make_ckpt(vocab, 1, 1);
  // with q identically zero, dK = dS^T q is a product of exact zeros
  Tensor& wq = ckpt.params.at("decoder.layer.0.attn.wq");
  Tensor& bq = ckpt.params.at("decoder.layer.0.attn.bq");
  std::fill(wq.data.begin(), wq.data.end(), 0.0);
  std::fill(bq.data.begin(), bq.data.end(), 0.0);

  std::vector<Example> dev;
  for (int32_t w = 5; w < 8; ++w) {
    Example ex;
    ex.src = {4, w, kEosId};
    ex.tgt_out = {4, w, static_cast<int32_t>(w == 7 ? 5 : w + 1), kEosId};
    ex.tgt_in = {kBosId, 4, w, static_cast<int32_t>(w == 7 ? 5 : w + 1)};
    dev.push_back(ex);
  }

  FisherMap f = fisher(ckpt, {dev});
  for (const std::string& name :
       {std::string("decoder.layer.0.attn.wk"), std::string("decoder.layer.0.attn.bk")})
    for (double x : f.at(name).data) CHECK(x == 0.0);

  // sanity: the map is not globally zero, and never negative
  double total = 0.0;
  for (const auto& [name, t] : f) {
    (void)name;
    for (double x : t.data) {
      CHECK(x >= 0.0);
      total += x;
    }
  }
  CHECK(total > 0.0);
}

TEST_CASE("fisher: entries match squared finite-difference token gradients") {
  Vocab vocab = make_vocab({"u", "v", "w"});
  Checkpoint ckpt = make_ckpt(vocab, 1, 1);
  ModelConfig cfg = ckpt.config;
  cfg.label_smoothing_epsilon = 0.0;

  Example ex;
  ex.src = {4, 5, 6, kEosId};
  ex.tgt_out = {4, 6, 5, kEosId};
  ex.tgt_in = {kBosId, 4, 6, 5};

  FisherMap f = fisher(ckpt, {{ex}});

  struct Probe {
    std::string name;
    size_t flat;
  };
  std::vector<Probe> probes = {
      {"embedding.table", static_cast<size_t>(5 * ckpt.config.model_dim + 1)},
      {"decoder.layer.0.ffn.w1", 0},
      {"encoder.layer.0.attn.wq", 9},
      {"decoder.final_norm.gain", 2},
      {"encoder.layer.0.ffn.b2", 1},
      {"decoder.layer.0.cross_attn.wv", 11},
  };

  const double h = 1e-5;
  const size_t n_tokens = ex.tgt_out.size();
  for (const Probe& probe : probes) {
    double sum_sq = 0.0;
    for (size_t pos = 0; pos < n_tokens; ++pos) {
      NamedParamMap plus = ckpt.params, minus = ckpt.params;
      plus.at(probe.name).data[probe.flat] += h;
      minus.at(probe.name).data[probe.flat] -= h;
      double grad =
          -(token_nll(plus, cfg, ex, pos) - token_nll(minus, cfg, ex, pos)) / (2.0 * h);
      sum_sq += grad * grad;
    }
    double oracle = sum_sq / static_cast<double>(n_tokens);
    double got = f.at(probe.name).data[probe.flat];
    CHECK(std::abs(got - oracle) <= 1e-8 + 1e-5 * std::abs(oracle));
  }
}

TEST_CASE("fisher: independent of how the dev set is batched") {
  Vocab vocab = make_vocab({"u", "v", "w"});
  Checkpoint ckpt = make_ckpt(vocab, 1, 1);

  std::vector<Example> dev;
  for (int32_t first : {5, 6, 7}) {
    Example ex;
    ex.src = {4, first, kEosId};
    ex.tgt_out = {4, first, kEosId};
    ex.tgt_in = {kBosId, 4, first};
    dev.push_back(ex);
  }

  FisherMap one = fisher(ckpt, {dev});
  FisherMap split = fisher(ckpt, {{dev[0]}, {dev[1]}, {dev[2]}});
  FisherMap uneven = fisher(ckpt, {{dev[0], dev[1]}, {dev[2]}});
  for (const auto& [name, t] : one) {
    const Tensor& s = split.at(name);
    const Tensor& u = uneven.at(name);
    for (size_t i = 0; i < t.data.size(); ++i) {
      CHECK(std::abs(t.data[i] - s.data[i]) <= 1e-10);
      CHECK(std::abs(t.data[i] - u.data[i]) <= 1e-10);
    }
  }
}

TEST_CASE("fisher: empty dev sets are refused") {
  Checkpoint ckpt = make_ckpt(make_vocab({"u"}));
  CHECK(error_kind([&] { fisher(ckpt, {}); }) == ErrorKind::Domain);
  CHECK(error_kind([&] { fisher(ckpt, {{}}); }) == ErrorKind::Domain);

  Example mismatched;
  mismatched.src = {4, kEosId};
  mismatched.tgt_in = {kBosId, 4};
  mismatched.tgt_out = {4, 5, kEosId};
  CHECK(error_kind([&] { fisher(ckpt, {{mismatched}}); }) == ErrorKind::Shape);
}

TEST_CASE("fisher_groups: threshold splits elements into runs") {
  FisherMap map;
  Tensor t = Tensor::zeros({6});
  t.data = {0.5, 0.5, 1e-7, 1e-7, 0.5, 1e-7};
  map.emplace("w", std::move(t));

  GroupSet gs = fisher_groups(map, 1e-5, 0.25);
  REQUIRE(gs.groups.size() == 2);
  CHECK(gs.groups[0].name == "fisher_scaled");
  CHECK(gamma_at(gs.groups[0], 0) == 0.25);
  CHECK(gamma_at(gs.groups[0], 100000) == 0.25);
  CHECK(gamma_at(gs.groups[1], 0) == 1.0);

  std::vector<std::pair<int32_t, int64_t>> expected = {{0, 2}, {1, 2}, {0, 1}, {1, 1}};
  CHECK(gs.runs.at("w") == expected);

  // f=0 on a strictly positive map scales everything
  FisherMap positive;
  Tensor q = Tensor::zeros({4});
  q.data = {0.1, 2.0, 3e-9, 0.7};
  positive.emplace("w", std::move(q));
  GroupSet all_scaled = fisher_groups(positive, 0.0, 0.5);
  std::vector<std::pair<int32_t, int64_t>> single = {{0, 4}};
  CHECK(all_scaled.runs.at("w") == single);

  CHECK(error_kind([&] { fisher_groups(positive, -1.0, 0.5); }) == ErrorKind::Domain);
  CHECK(error_kind([&] { fisher_groups(positive, 0.0, 0.0); }) == ErrorKind::Domain);
}

TEST_CASE("fisher_groups: threshold above the max reproduces unscaled training bitwise") {
  GaussianStream gs(17);
  NamedParamMap params;
  params.emplace("a", Tensor::randn({4, 3}, gs, 0.3));
  params.emplace("b", Tensor::randn({5}, gs, 0.3));

  FisherMap map;
  double max_f = 0.0;
  for (const auto& [name, t] : params) {
    Tensor f = Tensor::randn(t.shape, gs, 1.0);
    for (double& x : f.data) {
      x = x * x;
      max_f = std::max(max_f, x);
    }
    map.emplace(name, std::move(f));
  }

  GroupSet fisher_gs = fisher_groups(map, max_f * 2.0, 0.1);
  fisher_gs.validate(params);
  for (const auto& [name, runs] : fisher_gs.runs) {
    (void)name;
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].first == 1);
  }

  NamedParamMap scaled = params, plain = params;
  NamedParamMap sm, sv, pm, pv;
  GroupSet plain_gs = single_group(params);
  for (int64_t t = 1; t <= 10; ++t) {
    NamedParamMap grads;
    GaussianStream gstep(200 + static_cast<uint64_t>(t));
    grads.emplace("a", Tensor::randn({4, 3}, gstep, 1.0));
    grads.emplace("b", Tensor::randn({5}, gstep, 1.0));
    adam_step(scaled, grads, sm, sv, t, 0.01, fisher_gs, t - 1);
    adam_step(plain, grads, pm, pv, t, 0.01, plain_gs, t - 1);
  }
  for (const auto& [name, t] : scaled) CHECK(bitwise_equal(t, plain.at(name)));
}
