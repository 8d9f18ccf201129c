#include "mtgrow/surgery.hpp"

#include <algorithm>
#include <cmath>

namespace mtgrow {

using nlohmann::json;

std::string to_string(EmbeddingInit v) {
  switch (v) {
    case EmbeddingInit::UnkCopy: return "unk_copy";
    case EmbeddingInit::RandomNew: return "random_new";
    case EmbeddingInit::RandomAll: return "random_all";
  }
  fail(ErrorKind::Domain, "bad EmbeddingInit");
}

std::string to_string(WidthInit v) {
  switch (v) {
    case WidthInit::ConcatNoise: return "concat_noise";
    case WidthInit::LinearInterp: return "linear_interp";
    case WidthInit::RandomExpand: return "random_expand";
  }
  fail(ErrorKind::Domain, "bad WidthInit");
}

std::string to_string(NormMode v) {
  switch (v) {
    case NormMode::FrobeniusMatch: return "frobenius_match";
    case NormMode::FunctionPreserve: return "function_preserve";
    case NormMode::None: return "none";
  }
  fail(ErrorKind::Domain, "bad NormMode");
}

std::string to_string(DepthInit v) {
  switch (v) {
    case DepthInit::AverageLayer: return "average_layer";
    case DepthInit::ClosestLayer: return "closest_layer";
    case DepthInit::Random: return "random";
  }
  fail(ErrorKind::Domain, "bad DepthInit");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Copied: return "copied";
    case Provenance::CopiedNoisy: return "copied_noisy";
    case Provenance::Interpolated: return "interpolated";
    case Provenance::UnkRow: return "unk_row";
    case Provenance::FreshRandom: return "fresh_random";
    case Provenance::LayerAverage: return "layer_average";
  }
  fail(ErrorKind::Domain, "bad Provenance");
}

namespace {

template <typename T>
T from_string_impl(const std::string& s, const std::vector<std::pair<const char*, T>>& table,
                   const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  fail(ErrorKind::Domain, std::string("unknown ") + what + ": '" + s + "'");
}

}  // namespace

EmbeddingInit embedding_init_from_string(const std::string& s) {
  return from_string_impl<EmbeddingInit>(s,
                                         {{"unk_copy", EmbeddingInit::UnkCopy},
                                          {"random_new", EmbeddingInit::RandomNew},
                                          {"random_all", EmbeddingInit::RandomAll}},
                                         "embedding_init");
}

WidthInit width_init_from_string(const std::string& s) {
  return from_string_impl<WidthInit>(s,
                                     {{"concat_noise", WidthInit::ConcatNoise},
                                      {"linear_interp", WidthInit::LinearInterp},
                                      {"random_expand", WidthInit::RandomExpand}},
                                     "width_init");
}

NormMode norm_mode_from_string(const std::string& s) {
  return from_string_impl<NormMode>(s,
                                    {{"frobenius_match", NormMode::FrobeniusMatch},
                                     {"function_preserve", NormMode::FunctionPreserve},
                                     {"none", NormMode::None}},
                                    "norm_mode");
}

DepthInit depth_init_from_string(const std::string& s) {
  return from_string_impl<DepthInit>(s,
                                     {{"average_layer", DepthInit::AverageLayer},
                                      {"closest_layer", DepthInit::ClosestLayer},
                                      {"random", DepthInit::Random}},
                                     "depth_init");
}

Provenance provenance_from_string(const std::string& s) {
  return from_string_impl<Provenance>(s,
                                      {{"copied", Provenance::Copied},
                                       {"copied_noisy", Provenance::CopiedNoisy},
                                       {"interpolated", Provenance::Interpolated},
                                       {"unk_row", Provenance::UnkRow},
                                       {"fresh_random", Provenance::FreshRandom},
                                       {"layer_average", Provenance::LayerAverage}},
                                      "provenance");
}

int64_t ElementRuns::total() const {
  int64_t n = 0;
  for (const auto& [p, c] : provenance) {
    (void)p;
    n += c;
  }
  return n;
}

void ElementRuns::append(Provenance p, bool fresh, int64_t count) {
  if (count <= 0) return;
  if (!provenance.empty() && provenance.back().first == p)
    provenance.back().second += count;
  else
    provenance.emplace_back(p, count);
  if (!is_new.empty() && is_new.back().first == fresh)
    is_new.back().second += count;
  else
    is_new.emplace_back(fresh, count);
}

json report_to_json(const SurgeryReport& report) {
  json tensors = json::object();
  for (const auto& [name, runs] : report.tensors) {
    json prov = json::array();
    for (const auto& [p, c] : runs.provenance) prov.push_back({to_string(p), c});
    json fresh = json::array();
    for (const auto& [f, c] : runs.is_new) fresh.push_back({f, c});
    tensors[name] = {{"provenance", prov}, {"is_new", fresh}};
  }
  return json{{"overlap_coverage", report.overlap_coverage},
              {"choices", report.choices},
              {"tensors", tensors},
              {"source_name", report.source_name}};
}

SurgeryReport report_from_json(const json& j) {
  SurgeryReport r;
  try {
    r.overlap_coverage = j.at("overlap_coverage").get<double>();
    r.choices = j.at("choices").get<std::map<std::string, std::string>>();
    r.source_name = j.at("source_name").get<std::map<std::string, std::string>>();
    for (const auto& [name, entry] : j.at("tensors").items()) {
      ElementRuns runs;
      for (const auto& pair : entry.at("provenance"))
        runs.provenance.emplace_back(provenance_from_string(pair.at(0).get<std::string>()),
                                     pair.at(1).get<int64_t>());
      for (const auto& pair : entry.at("is_new"))
        runs.is_new.emplace_back(pair.at(0).get<bool>(), pair.at(1).get<int64_t>());
      r.tensors[name] = std::move(runs);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Manifest, std::string("bad surgery report: ") + e.what());
  }
  return r;
}

namespace {

void drop_moments(Checkpoint& c, const std::string& name) {
  c.adam_m.erase(name);
  c.adam_v.erase(name);
}

Checkpoint remap_impl(const Checkpoint& ckpt, const Vocab& new_vocab, const VocabMapping& mapping,
                      EmbeddingInit strategy, uint64_t seed, SurgeryReport* report) {
  const Tensor& old_table = ckpt.params.at("embedding.table");
  int64_t old_v = old_table.rows(), d = old_table.cols();
  int64_t new_v = new_vocab.size();

  std::vector<char> seen_old(static_cast<size_t>(old_v), 0), seen_new(static_cast<size_t>(new_v), 0);
  std::vector<int32_t> source(static_cast<size_t>(new_v), -1);  // new row -> old row
  for (const auto& [o, n] : mapping.pairs) {
    if (o < 0 || o >= old_v || n < 0 || n >= new_v)
      fail(ErrorKind::Vocab, "mapping pair (" + std::to_string(o) + "," + std::to_string(n) +
                                 ") out of range");
    if (seen_old[static_cast<size_t>(o)]++ || seen_new[static_cast<size_t>(n)]++)
      fail(ErrorKind::Vocab, "mapping reuses an id");
    if (ckpt.vocab.tokens[static_cast<size_t>(o)] != new_vocab.tokens[static_cast<size_t>(n)])
      fail(ErrorKind::Vocab, "mapping pairs tokens with different surfaces");
    source[static_cast<size_t>(n)] = o;
  }

  Tensor table = Tensor::zeros({new_v, d});
  std::vector<Provenance> prov(static_cast<size_t>(new_v), Provenance::Copied);
  std::vector<char> fresh(static_cast<size_t>(new_v), 0);
  GaussianStream gs(mix_seed(seed, fnv1a("embedding.remap")));
  double std_dev = 1.0 / std::sqrt(static_cast<double>(d));

  auto copy_row = [&](int64_t dst, int64_t src) {
    for (int64_t j = 0; j < d; ++j) table.at(dst, j) = old_table.at(src, j);
  };
  auto draw_row = [&](int64_t dst) {
    for (int64_t j = 0; j < d; ++j) table.at(dst, j) = gs.next() * std_dev;
  };

  // Fresh rows are drawn in ascending row order so the stream layout is
  // reproducible from (seed, strategy) alone.
  switch (strategy) {
    case EmbeddingInit::RandomAll:
      for (int64_t r = 0; r < new_v; ++r) {
        draw_row(r);
        prov[static_cast<size_t>(r)] = Provenance::FreshRandom;
        fresh[static_cast<size_t>(r)] = 1;
      }
      break;
    case EmbeddingInit::UnkCopy:
      for (int64_t r = 0; r < new_v; ++r) {
        if (source[static_cast<size_t>(r)] >= 0) {
          copy_row(r, source[static_cast<size_t>(r)]);
        } else {
          copy_row(r, kUnkId);
          prov[static_cast<size_t>(r)] = Provenance::UnkRow;
          fresh[static_cast<size_t>(r)] = 1;
        }
      }
      break;
    case EmbeddingInit::RandomNew:
      for (int64_t r = 0; r < new_v; ++r) {
        if (source[static_cast<size_t>(r)] >= 0) {
          copy_row(r, source[static_cast<size_t>(r)]);
        } else {
          draw_row(r);
          prov[static_cast<size_t>(r)] = Provenance::FreshRandom;
          fresh[static_cast<size_t>(r)] = 1;
        }
      }
      break;
  }

  Checkpoint out = ckpt;
  bool identical = new_v == old_v && bitwise_equal(table, old_table);
  out.params["embedding.table"] = std::move(table);
  out.vocab = new_vocab;
  out.config.vocab_size = new_v;
  // An unchanged table (identity growth) keeps its moments; any real remap
  // resets them, matching the shape-change rule.
  if (!identical) drop_moments(out, "embedding.table");

  if (report != nullptr) {
    ElementRuns runs;
    for (int64_t r = 0; r < new_v; ++r)
      runs.append(prov[static_cast<size_t>(r)], fresh[static_cast<size_t>(r)] != 0, d);
    report->tensors["embedding.table"] = std::move(runs);
    report->source_name["embedding.table"] = "embedding.table";
  }
  return out;
}

}  // namespace

std::vector<std::string> ffn_prefixes(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (int64_t i = 0; i < cfg.enc_layers; ++i) out.push_back("encoder.layer." + std::to_string(i));
  for (int64_t i = 0; i < cfg.dec_layers; ++i) out.push_back("decoder.layer." + std::to_string(i));
  return out;
}

namespace {

Checkpoint widen_impl(const Checkpoint& ckpt, int64_t factor, WidthInit strategy, double noise_std,
                      NormMode norm_mode, uint64_t seed, SurgeryReport* report) {
  if (factor < 1) fail(ErrorKind::Domain, "widen_ffn: factor must be >= 1");
  if (noise_std < 0.0) fail(ErrorKind::Domain, "widen_ffn: noise_std must be >= 0");
  Checkpoint out = ckpt;
  if (factor == 1) return out;

  int64_t d = ckpt.config.model_dim;
  int64_t h = ckpt.config.ffn_hidden_dim;
  int64_t big = h * factor;
  double fresh_std = 1.0 / std::sqrt(static_cast<double>(d));

  for (const std::string& prefix : ffn_prefixes(ckpt.config)) {
    const Tensor& w1 = ckpt.params.at(prefix + ".ffn.w1");  // [h, d]
    const Tensor& b1 = ckpt.params.at(prefix + ".ffn.b1");  // [h]
    const Tensor& w2 = ckpt.params.at(prefix + ".ffn.w2");  // [d, h]
    Tensor w1n = Tensor::zeros({big, d});
    Tensor b1n = Tensor::zeros({big});
    Tensor w2n = Tensor::zeros({d, big});

    // One stream per layer, consumed in a fixed order (W1 blocks, then b1,
    // then W2 blocks for the block strategies; expanded-index order for
    // linear_interp) so tests can regenerate any slice of it.
    GaussianStream gs(mix_seed(seed, fnv1a(prefix + ".ffn")));

    switch (strategy) {
      case WidthInit::ConcatNoise:
      case WidthInit::RandomExpand: {
        bool concat = strategy == WidthInit::ConcatNoise;
        for (int64_t r = 0; r < h; ++r)
          for (int64_t c = 0; c < d; ++c) w1n.at(r, c) = w1.at(r, c);
        for (int64_t blk = 1; blk < factor; ++blk)
          for (int64_t r = 0; r < h; ++r)
            for (int64_t c = 0; c < d; ++c)
              w1n.at(blk * h + r, c) =
                  concat ? w1.at(r, c) + gs.next() * noise_std : gs.next() * fresh_std;
        for (int64_t r = 0; r < h; ++r) b1n.data[static_cast<size_t>(r)] = b1.data[static_cast<size_t>(r)];
        if (concat)
          for (int64_t blk = 1; blk < factor; ++blk)
            for (int64_t r = 0; r < h; ++r)
              b1n.data[static_cast<size_t>(blk * h + r)] =
                  b1.data[static_cast<size_t>(r)] + gs.next() * noise_std;
        // random_expand: new bias entries stay at the fresh-init value 0
        for (int64_t r = 0; r < d; ++r)
          for (int64_t c = 0; c < h; ++c) w2n.at(r, c) = w2.at(r, c);
        for (int64_t blk = 1; blk < factor; ++blk)
          for (int64_t r = 0; r < d; ++r)
            for (int64_t c = 0; c < h; ++c)
              w2n.at(r, blk * h + c) =
                  concat ? w2.at(r, c) + gs.next() * noise_std : gs.next() * fresh_std;
        break;
      }
      case WidthInit::LinearInterp: {
        // row i of W1' mirrors old row i/factor; W2' columns pair with W1'
        // rows index-for-index, keeping the hidden axes aligned
        for (int64_t i = 0; i < big; ++i) {
          int64_t src = i / factor;
          for (int64_t c = 0; c < d; ++c)
            w1n.at(i, c) = w1.at(src, c) + (i % factor == 0 ? 0.0 : gs.next() * noise_std);
        }
        for (int64_t i = 0; i < big; ++i)
          b1n.data[static_cast<size_t>(i)] = b1.data[static_cast<size_t>(i / factor)] +
                                             (i % factor == 0 ? 0.0 : gs.next() * noise_std);
        for (int64_t j = 0; j < big; ++j) {
          int64_t src = j / factor;
          if (j % factor == 0) {
            for (int64_t r = 0; r < d; ++r) w2n.at(r, j) = w2.at(r, src);
          } else {
            for (int64_t r = 0; r < d; ++r) w2n.at(r, j) = w2.at(r, src) + gs.next() * noise_std;
          }
        }
        break;
      }
    }

    switch (norm_mode) {
      case NormMode::FrobeniusMatch: {
        double expanded = frobenius_norm(w2n);
        if (expanded > 0.0) {
          double scale = frobenius_norm(w2) / expanded;
          for (double& x : w2n.data) x *= scale;
        }
        break;
      }
      case NormMode::FunctionPreserve:
        for (double& x : w2n.data) x /= static_cast<double>(factor);
        break;
      case NormMode::None:
        break;
    }

    out.params[prefix + ".ffn.w1"] = std::move(w1n);
    out.params[prefix + ".ffn.b1"] = std::move(b1n);
    out.params[prefix + ".ffn.w2"] = std::move(w2n);
    for (const char* t : {".ffn.w1", ".ffn.b1", ".ffn.w2"}) drop_moments(out, prefix + t);

    if (report != nullptr) {
      Provenance expanded_prov = strategy == WidthInit::ConcatNoise    ? Provenance::CopiedNoisy
                                 : strategy == WidthInit::LinearInterp ? Provenance::Interpolated
                                                                       : Provenance::FreshRandom;
      ElementRuns rw1, rb1, rw2;
      if (strategy == WidthInit::LinearInterp) {
        for (int64_t i = 0; i < big; ++i) {
          bool fresh = i % factor != 0;
          rw1.append(fresh ? expanded_prov : Provenance::Copied, fresh, d);
          rb1.append(fresh ? expanded_prov : Provenance::Copied, fresh, 1);
        }
        for (int64_t r = 0; r < d; ++r)
          for (int64_t j = 0; j < big; ++j) {
            bool fresh = j % factor != 0;
            rw2.append(fresh ? expanded_prov : Provenance::Copied, fresh, 1);
          }
      } else {
        rw1.append(Provenance::Copied, false, h * d);
        rw1.append(expanded_prov, true, (factor - 1) * h * d);
        rb1.append(Provenance::Copied, false, h);
        rb1.append(expanded_prov, true, (factor - 1) * h);
        for (int64_t r = 0; r < d; ++r) {
          rw2.append(Provenance::Copied, false, h);
          rw2.append(expanded_prov, true, (factor - 1) * h);
        }
      }
      report->tensors[prefix + ".ffn.w1"] = std::move(rw1);
      report->tensors[prefix + ".ffn.b1"] = std::move(rb1);
      report->tensors[prefix + ".ffn.w2"] = std::move(rw2);
    }
  }
  out.config.ffn_hidden_dim = big;
  return out;
}

const char* kEncSuffixes[] = {"attn.wq",       "attn.wk",      "attn.wv",  "attn.wo",
                              "attn.bq",       "attn.bk",      "attn.bv",  "attn.bo",
                              "attn_norm.gain", "attn_norm.bias", "ffn.w1",   "ffn.b1",
                              "ffn.w2",        "ffn.b2",       "ffn_norm.gain", "ffn_norm.bias"};
const char* kDecExtraSuffixes[] = {"cross_attn.wq", "cross_attn.wk", "cross_attn.wv",
                                   "cross_attn.wo", "cross_attn.bq", "cross_attn.bk",
                                   "cross_attn.bv", "cross_attn.bo", "cross_norm.gain",
                                   "cross_norm.bias"};

std::vector<std::string> layer_suffixes(bool decoder) {
  std::vector<std::string> out(std::begin(kEncSuffixes), std::end(kEncSuffixes));
  if (decoder) out.insert(out.end(), std::begin(kDecExtraSuffixes), std::end(kDecExtraSuffixes));
  return out;
}

bool is_gain_suffix(const std::string& s) {
  return s.size() >= 4 && s.compare(s.size() - 4, 4, "gain") == 0;
}

bool is_bias_suffix(const std::string& s) {
  auto dot = s.rfind('.');
  std::string last = dot == std::string::npos ? s : s.substr(dot + 1);
  return !last.empty() && last[0] == 'b';
}

Checkpoint deepen_impl(const Checkpoint& ckpt, int64_t enc_count, int64_t dec_count,
                       const std::string& enc_position, const std::string& dec_position,
                       DepthInit strategy, uint64_t seed, SurgeryReport* report) {
  if (enc_count < 0 || dec_count < 0) fail(ErrorKind::Domain, "deepen: counts must be >= 0");
  if (enc_count > 0 && enc_position != "bottom")
    fail(ErrorKind::Domain, "deepen: encoder position '" + enc_position + "' not implemented");
  if (dec_count > 0 && dec_position != "top")
    fail(ErrorKind::Domain, "deepen: decoder position '" + dec_position + "' not implemented");
  if (enc_count == 0 && dec_count == 0) return ckpt;

  // encoder bottom: old layer k moves to k+enc_count; decoder top: names stay
  auto rename = [&](const std::string& name) -> std::string {
    const std::string enc = "encoder.layer.";
    if (enc_count > 0 && name.rfind(enc, 0) == 0) {
      size_t dot = name.find('.', enc.size());
      int64_t idx = std::stoll(name.substr(enc.size(), dot - enc.size()));
      return enc + std::to_string(idx + enc_count) + name.substr(dot);
    }
    return name;
  };

  Checkpoint out;
  out.config = ckpt.config;
  out.config.enc_layers += enc_count;
  out.config.dec_layers += dec_count;
  out.vocab = ckpt.vocab;
  out.step = ckpt.step;
  for (const auto& [name, t] : ckpt.params) out.params[rename(name)] = t;
  for (const auto& [name, t] : ckpt.adam_m) out.adam_m[rename(name)] = t;
  for (const auto& [name, t] : ckpt.adam_v) out.adam_v[rename(name)] = t;

  if (report != nullptr) {
    std::map<std::string, ElementRuns> tensors;
    std::map<std::string, std::string> sources;
    for (auto& [name, runs] : report->tensors) tensors[rename(name)] = std::move(runs);
    for (auto& [name, src] : report->source_name) sources[rename(name)] = src;
    report->tensors = std::move(tensors);
    report->source_name = std::move(sources);
  }

  struct Stack {
    const char* side;
    bool decoder;
    int64_t old_layers, add, first_new, closest_old;
  };
  std::vector<Stack> stacks;
  if (enc_count > 0)
    stacks.push_back({"encoder", false, ckpt.config.enc_layers, enc_count, 0, 0});
  if (dec_count > 0)
    stacks.push_back({"decoder", true, ckpt.config.dec_layers, dec_count, ckpt.config.dec_layers,
                      ckpt.config.dec_layers - 1});

  for (const Stack& st : stacks) {
    for (int64_t li = st.first_new; li < st.first_new + st.add; ++li) {
      for (const std::string& suffix : layer_suffixes(st.decoder)) {
        std::string name =
            std::string(st.side) + ".layer." + std::to_string(li) + "." + suffix;
        Tensor t;
        Provenance prov;
        switch (strategy) {
          case DepthInit::AverageLayer: {
            // mean across the stack's pre-existing layers, tensor by tensor
            const Tensor& first = ckpt.params.at(std::string(st.side) + ".layer.0." + suffix);
            t = Tensor::zeros(first.shape);
            for (int64_t k = 0; k < st.old_layers; ++k) {
              const Tensor& src =
                  ckpt.params.at(std::string(st.side) + ".layer." + std::to_string(k) + "." + suffix);
              for (size_t i = 0; i < t.data.size(); ++i) t.data[i] += src.data[i];
            }
            for (double& x : t.data) x /= static_cast<double>(st.old_layers);
            prov = Provenance::LayerAverage;
            break;
          }
          case DepthInit::ClosestLayer: {
            t = ckpt.params.at(std::string(st.side) + ".layer." + std::to_string(st.closest_old) +
                               "." + suffix);
            prov = Provenance::Copied;
            break;
          }
          case DepthInit::Random: {
            const Tensor& like = ckpt.params.at(std::string(st.side) + ".layer.0." + suffix);
            if (is_gain_suffix(suffix)) {
              t = Tensor::full(like.shape, 1.0);
            } else if (is_bias_suffix(suffix)) {
              t = Tensor::zeros(like.shape);
            } else {
              GaussianStream gs(mix_seed(seed, fnv1a(name)));
              t = Tensor::randn(like.shape, gs,
                                1.0 / std::sqrt(static_cast<double>(ckpt.config.model_dim)));
            }
            prov = Provenance::FreshRandom;
            break;
          }
          default:
            fail(ErrorKind::Domain, "bad DepthInit");
        }
        if (report != nullptr) {
          ElementRuns runs;
          runs.append(prov, true, t.numel());
          report->tensors[name] = std::move(runs);
          report->source_name[name] = "";
        }
        out.params[name] = std::move(t);
      }
    }
  }
  return out;
}

}  // namespace

Checkpoint remap_embeddings(const Checkpoint& ckpt, const Vocab& new_vocab,
                            const VocabMapping& mapping, EmbeddingInit strategy, uint64_t seed) {
  return remap_impl(ckpt, new_vocab, mapping, strategy, seed, nullptr);
}

Checkpoint widen_ffn(const Checkpoint& ckpt, int64_t factor, WidthInit strategy, double noise_std,
                     NormMode norm_mode, uint64_t seed) {
  return widen_impl(ckpt, factor, strategy, noise_std, norm_mode, seed, nullptr);
}

Checkpoint deepen(const Checkpoint& ckpt, int64_t enc_count, int64_t dec_count,
                  const std::string& enc_position, const std::string& dec_position,
                  DepthInit strategy, uint64_t seed) {
  return deepen_impl(ckpt, enc_count, dec_count, enc_position, dec_position, strategy, seed,
                     nullptr);
}

std::pair<Checkpoint, SurgeryReport> grow(const Checkpoint& ckpt, const GrowthPlan& plan) {
  SurgeryReport report;
  for (const auto& [name, t] : ckpt.params) {
    ElementRuns runs;
    runs.append(Provenance::Copied, false, t.numel());
    report.tensors[name] = std::move(runs);
    report.source_name[name] = name;
  }

  VocabMapping mapping = overlap_map(ckpt.vocab, plan.target_vocab);
  report.overlap_coverage = mapping.coverage;
  report.choices["embedding_init"] = to_string(plan.embedding_init);
  report.choices["width_factor"] = std::to_string(plan.width.factor);
  if (plan.width.factor > 1) {
    report.choices["width_init"] = to_string(plan.width.init);
    report.choices["noise_std"] = std::to_string(plan.width.noise_std);
    report.choices["norm_mode"] = to_string(plan.width.norm);
  }
  report.choices["depth_enc_count"] = std::to_string(plan.depth.enc_count);
  report.choices["depth_dec_count"] = std::to_string(plan.depth.dec_count);
  if (plan.depth.enc_count > 0 || plan.depth.dec_count > 0)
    report.choices["depth_init"] = to_string(plan.depth.init);

  Checkpoint out = remap_impl(ckpt, plan.target_vocab, mapping, plan.embedding_init, plan.seed,
                              &report);
  if (plan.width.factor != 1)
    out = widen_impl(out, plan.width.factor, plan.width.init, plan.width.noise_std, plan.width.norm,
                     plan.seed, &report);
  if (plan.depth.enc_count != 0 || plan.depth.dec_count != 0)
    out = deepen_impl(out, plan.depth.enc_count, plan.depth.dec_count, plan.depth.enc_position,
                      plan.depth.dec_position, plan.depth.init, plan.seed, &report);
  return {std::move(out), std::move(report)};
}

}  // namespace mtgrow
