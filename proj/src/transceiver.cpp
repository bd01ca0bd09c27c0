#include "rdsc/transceiver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rdsc {

namespace {

thread_local std::size_t g_fallback_rows = 0;

enum class Init { normal, xavier, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

void attention_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  for (const char* m : {"q", "k", "v", "o"}) {
    out.push_back({prefix + ".w" + m, {d, d}, Init::xavier});
    out.push_back({prefix + ".b" + m, {d}, Init::zeros});
  }
}

void norm_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".g", {d}, Init::ones});
  out.push_back({prefix + ".b", {d}, Init::zeros});
}

void ffn_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d, std::size_t f) {
  out.push_back({prefix + ".w1", {d, f}, Init::xavier});
  out.push_back({prefix + ".b1", {f}, Init::zeros});
  out.push_back({prefix + ".w2", {f, d}, Init::xavier});
  out.push_back({prefix + ".b2", {d}, Init::zeros});
}

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  const std::size_t d = c.d_model, h = c.d_det, k2 = 2 * c.k_sym;
  std::vector<ParamSpec> s;
  s.push_back({"gamma", {c.vocab, d}, Init::normal});
  s.push_back({"det.wx", {d, 3 * h}, Init::xavier});
  s.push_back({"det.bx", {3 * h}, Init::zeros});
  s.push_back({"det.wh", {h, 3 * h}, Init::xavier});
  s.push_back({"det.bh", {3 * h}, Init::zeros});
  s.push_back({"det.head.w", {h, 1}, Init::xavier});
  s.push_back({"det.head.b", {1}, Init::zeros});
  for (std::size_t i = 0; i < c.enc_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    attention_specs(s, p + ".attn", d);
    norm_specs(s, p + ".ln1", d);
    ffn_specs(s, p + ".ffn", d, c.ffn);
    norm_specs(s, p + ".ln2", d);
  }
  s.push_back({"phi.w", {d, k2}, Init::xavier});
  s.push_back({"phi.b", {k2}, Init::zeros});
  s.push_back({"zeta.w1", {k2, d}, Init::xavier});
  s.push_back({"zeta.b1", {d}, Init::zeros});
  s.push_back({"zeta.w2", {d, d}, Init::xavier});
  s.push_back({"zeta.b2", {d}, Init::zeros});
  for (std::size_t i = 0; i < c.dec_layers; ++i) {
    const std::string p = "dec." + std::to_string(i);
    attention_specs(s, p + ".self", d);
    norm_specs(s, p + ".ln1", d);
    attention_specs(s, p + ".cross", d);
    norm_specs(s, p + ".ln2", d);
    ffn_specs(s, p + ".ffn", d, c.ffn);
    norm_specs(s, p + ".ln3", d);
  }
  s.push_back({"out.w", {d, c.vocab}, Init::xavier});
  s.push_back({"out.b", {c.vocab}, Init::zeros});
  s.push_back({"mi.w1", {2 * k2, c.d_mi}, Init::xavier});
  s.push_back({"mi.b1", {c.d_mi}, Init::zeros});
  s.push_back({"mi.w2", {c.d_mi, 1}, Init::xavier});
  s.push_back({"mi.b2", {1}, Init::zeros});
  return s;
}

Tensor mask_tensor(std::span<const double> valid, std::size_t batch, std::size_t len) {
  return Tensor::from({batch, len, 1}, std::vector<double>(valid.begin(), valid.end()));
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  return permute(reshape(x, {b, l, heads, d / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), l = x.dim(2), dk = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {b, l, h * dk});
}

Tensor feed_forward(const ModelParams& p, const std::string& prefix, const Tensor& x) {
  return linear(relu(linear(x, p.at(prefix + ".w1"), p.at(prefix + ".b1"))), p.at(prefix + ".w2"),
                p.at(prefix + ".b2"));
}

Tensor add_norm(const ModelParams& p, const std::string& prefix, const Tensor& x, const Tensor& y) {
  return layer_norm(x + y, p.at(prefix + ".g"), p.at(prefix + ".b"));
}

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(std::string("model.") + field + ": " + what);
  };
  need(vocab > kNumReserved, "vocab", "must exceed the reserved tokens");
  need(d_model > 0, "d_model", "must be positive");
  need(heads > 0 && d_model % heads == 0, "heads", "must divide d_model");
  need(enc_layers > 0, "enc_layers", "must be positive");
  need(dec_layers > 0, "dec_layers", "must be positive");
  need(ffn > 0, "ffn", "must be positive");
  need(k_sym > 0, "k_sym", "must be positive");
  need(max_len >= 3, "max_len", "must be at least 3");
  need(d_det > 0, "d_det", "must be positive");
  need(d_mi > 0, "d_mi", "must be positive");
}

void ModelParams::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("params: duplicate tensor '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("params: no tensor named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw IndexError("params: no tensor named '" + name + "'");
  return entries_[it->second].second;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::vector<Tensor> ModelParams::tensors_with_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : entries_)
    if (name.rfind(prefix, 0) == 0) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& e : entries_) e.second.set_requires_grad(on);
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [name, t] : entries_) {
    Tensor c = t.detach();
    c.set_requires_grad(t.requires_grad());
    out.add(name, c);
  }
  return out;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (const auto& s : param_specs(cfg)) {
    Tensor t;
    switch (s.init) {
      case Init::normal: t = Tensor::randn(s.shape, rng, 1.0); break;
      case Init::xavier: t = Tensor::uniform(s.shape, rng, std::sqrt(6.0 / double(s.shape[0] + s.shape[1]))); break;
      case Init::zeros: t = Tensor::zeros(s.shape); break;
      case Init::ones: t = Tensor::full(s.shape, 1.0); break;
    }
    t.set_requires_grad(true);
    params.add(s.name, t);
  }
  return params;
}

void check_params(const ModelParams& params, const ModelConfig& cfg) {
  cfg.validate();
  const auto specs = param_specs(cfg);
  for (const auto& s : specs) {
    if (!params.contains(s.name)) throw ShapeError("params: missing tensor '" + s.name + "'");
    const auto& got = params.at(s.name).shape();
    if (got != s.shape)
      throw ShapeError("params: tensor '" + s.name + "' has shape " + shape_str(got) + ", config expects " +
                       shape_str(s.shape));
  }
  if (params.entries().size() != specs.size())
    throw ShapeError("params: " + std::to_string(params.entries().size()) + " tensors, config expects " +
                     std::to_string(specs.size()));
}

// ---------------------------------------------------------------------------

SourceBatch make_source_batch(const std::vector<std::vector<std::size_t>>& seqs) {
  if (seqs.empty()) throw ShapeError("make_source_batch: empty batch");
  SourceBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) {
    if (s.empty()) throw ShapeError("make_source_batch: empty sequence");
    b.len = std::max(b.len, s.size());
  }
  b.ids.assign(b.batch * b.len, kPad);
  b.valid.assign(b.batch * b.len, 0.0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    std::copy(seqs[i].begin(), seqs[i].end(), b.ids.begin() + i * b.len);
    std::fill_n(b.valid.begin() + i * b.len, seqs[i].size(), 1.0);
    b.lengths.push_back(seqs[i].size());
  }
  return b;
}

TargetBatch make_target_batch(const std::vector<std::vector<std::size_t>>& seqs, std::size_t max_len) {
  if (seqs.empty()) throw ShapeError("make_target_batch: empty batch");
  TargetBatch t;
  t.batch = seqs.size();
  for (const auto& s : seqs) {
    if (s.size() + 2 > max_len)
      throw ShapeError("make_target_batch: target of " + std::to_string(s.size()) +
                       " tokens exceeds max_len " + std::to_string(max_len) + " with <start>/<end>");
    t.len = std::max(t.len, s.size() + 1);
  }
  t.input.assign(t.batch * t.len, kPad);
  t.output.assign(t.batch * t.len, kPad);
  for (std::size_t i = 0; i < t.batch; ++i) {
    auto* in = t.input.data() + i * t.len;
    auto* out = t.output.data() + i * t.len;
    in[0] = kStart;
    std::copy(seqs[i].begin(), seqs[i].end(), in + 1);
    std::copy(seqs[i].begin(), seqs[i].end(), out);
    out[seqs[i].size()] = kEnd;
  }
  return t;
}

// ---------------------------------------------------------------------------

Tensor positional_encoding(std::size_t len, std::size_t d_model) {
  std::vector<double> pe(len * d_model);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < d_model; ++i) {
      const double angle = double(pos) / std::pow(10000.0, double(2 * (i / 2)) / double(d_model));
      pe[pos * d_model + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({len, d_model}, std::move(pe));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return matmul(x, w) + b; }

Tensor embed(const Tensor& gamma, std::span<const std::size_t> ids, std::size_t batch, std::size_t len) {
  if (ids.size() != batch * len)
    throw ShapeError("embed: " + std::to_string(ids.size()) + " ids for a " + std::to_string(batch) + "x" +
                     std::to_string(len) + " batch");
  return embedding_lookup(gamma, ids, {batch, len}) + positional_encoding(len, gamma.dim(1));
}

Tensor detect_errors(const ModelParams& params, const Tensor& x_embed) {
  const std::size_t b = x_embed.dim(0), l = x_embed.dim(1);
  const Tensor& wh = params.at("det.wh");
  const Tensor& bh = params.at("det.bh");
  const std::size_t h = wh.dim(0);
  const Tensor gx = linear(x_embed, params.at("det.wx"), params.at("det.bx"));
  Tensor state = Tensor::zeros({b, h});
  std::vector<Tensor> states;
  for (std::size_t t = 0; t < l; ++t) {
    const Tensor gxt = reshape(narrow(gx, 1, t, 1), {b, 3 * h});
    const Tensor ght = linear(state, wh, bh);
    const Tensor z = sigmoid(narrow(gxt, 1, 0, h) + narrow(ght, 1, 0, h));
    const Tensor r = sigmoid(narrow(gxt, 1, h, h) + narrow(ght, 1, h, h));
    const Tensor n = tanh(narrow(gxt, 1, 2 * h, h) + r * narrow(ght, 1, 2 * h, h));
    state = n + z * (state - n);
    states.push_back(reshape(state, {b, 1, h}));
  }
  const Tensor hs = concat(states, 1);
  return reshape(sigmoid(linear(hs, params.at("det.head.w"), params.at("det.head.b"))), {b, l});
}

Tensor calibrated_softmax(const Tensor& scores, const Tensor& p, std::span<const double> key_valid, bool causal) {
  if (scores.rank() != 4) throw ShapeError("calibrated_softmax: scores must be (B,H,Lq,Lk), got " + shape_str(scores.shape()));
  const std::size_t nb = scores.dim(0), nh = scores.dim(1), lq = scores.dim(2), lk = scores.dim(3);
  if (key_valid.size() != nb * lk)
    throw ShapeError("calibrated_softmax: key mask has " + std::to_string(key_valid.size()) + " entries, expected " +
                     std::to_string(nb * lk));
  if (causal && lq != lk) throw ShapeError("calibrated_softmax: causal attention needs Lq == Lk");
  const bool calibrated = p.defined();
  if (calibrated && p.shape() != Shape{nb, lk})
    throw ShapeError("calibrated_softmax: P has shape " + shape_str(p.shape()) + ", expected " + shape_str({nb, lk}));

  const auto& s = scores.impl()->data;
  const std::size_t rows = nb * nh * lq;
  std::vector<double> out(s.size(), 0.0);
  auto base = std::make_shared<std::vector<double>>(calibrated ? s.size() : 0);  // pre-calibration A
  auto mass = std::make_shared<std::vector<double>>(calibrated ? rows : 0);      // sum_k A c, 0 = fallback

  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = r / (nh * lq), i = r % lq;
    const double* sr = s.data() + r * lk;
    double* orow = out.data() + r * lk;
    const double* kv = key_valid.data() + b * lk;
    const std::size_t end = causal ? i + 1 : lk;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < end; ++j)
      if (kv[j] != 0.0) mx = std::max(mx, sr[j]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // no admissible key
    double z = 0.0;
    for (std::size_t j = 0; j < end; ++j)
      if (kv[j] != 0.0) z += (orow[j] = std::exp(sr[j] - mx));
    for (std::size_t j = 0; j < end; ++j) orow[j] /= z;
    if (!calibrated) continue;

    double* arow = base->data() + r * lk;
    std::copy_n(orow, lk, arow);
    const double* pr = p.impl()->data.data() + b * lk;
    bool all_one = true;
    double m = 0.0;
    for (std::size_t j = 0; j < end; ++j)
      if (kv[j] != 0.0) {
        const double c = 1.0 - pr[j];
        all_one = all_one && c == 1.0;
        m += arow[j] * c;
      }
    (*mass)[r] = m;
    if (all_one) continue;
    if (!(m > 0.0)) {
      ++g_fallback_rows;
      std::size_t n = 0;
      for (std::size_t j = 0; j < end; ++j) n += kv[j] != 0.0;
      for (std::size_t j = 0; j < end; ++j) orow[j] = kv[j] != 0.0 ? 1.0 / double(n) : 0.0;
      continue;
    }
    for (std::size_t j = 0; j < end; ++j) orow[j] = arow[j] * (1.0 - pr[j]) / m;
  }

  auto si = scores.impl();
  auto pi = calibrated ? p.impl() : nullptr;
  std::vector<double> kvalid(key_valid.begin(), key_valid.end());
  std::vector<Tensor> inputs{scores};
  if (calibrated) inputs.push_back(p);
  return make_result(scores.shape(), std::move(out), inputs,
                     [si, pi, base, mass, kvalid, nb, nh, lq, lk, causal](TensorImpl& o) {
    const std::size_t rows = nb * nh * lq;
    const bool cal = pi != nullptr;
    std::vector<double>* gs = si->requires_grad ? &si->ensure_grad() : nullptr;
    std::vector<double>* gp = cal && pi->requires_grad ? &pi->ensure_grad() : nullptr;
    std::vector<double> ga(lk);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t b = r / (nh * lq), i = r % lq;
      const std::size_t end = causal ? i + 1 : lk;
      const double* kv = kvalid.data() + b * lk;
      const double* g = o.grad.data() + r * lk;
      const double* y = o.data.data() + r * lk;
      const double* a = y;
      if (cal) {
        const double m = (*mass)[r];
        if (!(m > 0.0)) continue;  // fallback or empty row: constant output
        a = base->data() + r * lk;
        const double* pr = pi->data.data() + b * lk;
        double gbar = 0.0;
        for (std::size_t j = 0; j < end; ++j) gbar += g[j] * y[j];
        for (std::size_t j = 0; j < end; ++j) {
          if (kv[j] == 0.0) {
            ga[j] = 0.0;
            continue;
          }
          const double d = (g[j] - gbar) / m;
          ga[j] = (1.0 - pr[j]) * d;
          if (gp) (*gp)[b * lk + j] -= a[j] * d;
        }
      } else {
        for (std::size_t j = 0; j < end; ++j) ga[j] = g[j];
      }
      if (!gs) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < end; ++j)
        if (kv[j] != 0.0) dot += a[j] * ga[j];
      double* gsr = gs->data() + r * lk;
      for (std::size_t j = 0; j < end; ++j)
        if (kv[j] != 0.0) gsr[j] += a[j] * (ga[j] - dot);
    }
  });
}

std::size_t attention_fallback_count() { return g_fallback_rows; }
void reset_attention_fallback_count() { g_fallback_rows = 0; }

Tensor multi_head_attention(const ModelParams& params, const std::string& prefix, std::size_t heads,
                            const Tensor& query, const Tensor& memory, const Tensor& p,
                            std::span<const double> key_valid, bool causal, Tensor* weights_out) {
  const std::size_t d = query.dim(2);
  const Tensor q = split_heads(linear(query, params.at(prefix + ".wq"), params.at(prefix + ".bq")), heads);
  const Tensor k = split_heads(linear(memory, params.at(prefix + ".wk"), params.at(prefix + ".bk")), heads);
  const Tensor v = split_heads(linear(memory, params.at(prefix + ".wv"), params.at(prefix + ".bv")), heads);
  const Tensor scores = matmul(q, transpose(k)) * (1.0 / std::sqrt(double(d / heads)));
  const Tensor a = calibrated_softmax(scores, p, key_valid, causal);
  if (weights_out) *weights_out = a;
  return linear(merge_heads(matmul(a, v)), params.at(prefix + ".wo"), params.at(prefix + ".bo"));
}

Tensor semantic_encode(const ModelParams& params, const ModelConfig& cfg, const Tensor& x_embed, const Tensor& p,
                       std::span<const double> valid) {
  Tensor x = x_embed;
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string pre = "enc." + std::to_string(i);
    x = add_norm(params, pre + ".ln1", x, multi_head_attention(params, pre + ".attn", cfg.heads, x, x, p, valid, false));
    x = add_norm(params, pre + ".ln2", x, feed_forward(params, pre + ".ffn", x));
  }
  return x;
}

Tensor channel_encode(const ModelParams& params, const ModelConfig& cfg, const Tensor& features,
                      std::span<const double> valid) {
  const std::size_t b = features.dim(0), l = features.dim(1);
  if (valid.size() != b * l) throw ShapeError("channel_encode: mask size does not match features " + shape_str(features.shape()));
  const Tensor x = linear(features, params.at("phi.w"), params.at("phi.b")) * mask_tensor(valid, b, l);
  const Tensor energy = sum_axis(sum_axis(square(x), 2), 1);  // (B,1,1)
  std::vector<double> symbols(b);
  for (std::size_t i = 0; i < b; ++i) {
    double n = 0.0;
    for (std::size_t t = 0; t < l; ++t) n += valid[i * l + t];
    symbols[i] = n * double(cfg.k_sym);
    if (n == 0.0) throw DiagnosticsError("channel_encode: sentence " + std::to_string(i) + " has no valid tokens");
    if (!(energy.data()[i] > 0.0))
      throw DiagnosticsError("channel_encode: zero-power frame for sentence " + std::to_string(i) +
                             " (power normalization undefined)");
  }
  const Tensor power = energy / Tensor::from({b, 1, 1}, symbols);
  return x / sqrt(power);
}

Tensor channel_decode(const ModelParams& params, const ModelConfig& cfg, const Tensor& y) {
  if (y.rank() != 3 || y.dim(2) != 2 * cfg.k_sym)
    throw ShapeError("channel_decode: expected (B, L, " + std::to_string(2 * cfg.k_sym) + ") frames, got " +
                     shape_str(y.shape()));
  const Tensor hidden = relu(linear(y, params.at("zeta.w1"), params.at("zeta.b1")));
  return linear(hidden, params.at("zeta.w2"), params.at("zeta.b2"));
}

Tensor semantic_decode_train(const ModelParams& params, const ModelConfig& cfg, const Tensor& memory,
                             std::span<const double> memory_valid, std::span<const std::size_t> target_input,
                             std::size_t batch, std::size_t target_len) {
  if (target_len > cfg.max_len)
    throw ShapeError("semantic_decode_train: target length " + std::to_string(target_len) + " exceeds max_len " +
                     std::to_string(cfg.max_len));
  const std::vector<double> self_valid(batch * target_len, 1.0);
  Tensor x = embed(params.at("gamma"), target_input, batch, target_len);
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    const std::string pre = "dec." + std::to_string(i);
    x = add_norm(params, pre + ".ln1", x,
                 multi_head_attention(params, pre + ".self", cfg.heads, x, x, {}, self_valid, true));
    x = add_norm(params, pre + ".ln2", x,
                 multi_head_attention(params, pre + ".cross", cfg.heads, x, memory, {}, memory_valid, false));
    x = add_norm(params, pre + ".ln3", x, feed_forward(params, pre + ".ffn", x));
  }
  return linear(x, params.at("out.w"), params.at("out.b"));
}

std::vector<std::vector<std::size_t>> semantic_decode_greedy(const ModelParams& params, const ModelConfig& cfg,
                                                             const Tensor& memory,
                                                             std::span<const double> memory_valid,
                                                             std::size_t batch, std::size_t max_len) {
  NoGradScope no_grad;
  max_len = std::min(max_len, cfg.max_len - 1);
  std::vector<std::vector<std::size_t>> out(batch);
  std::vector<bool> done(batch, false);
  std::vector<std::size_t> prefix(batch, kStart);  // batch x t, row-major
  const std::size_t vocab = cfg.vocab;
  for (std::size_t t = 1; t <= max_len; ++t) {
    const Tensor logits = semantic_decode_train(params, cfg, memory, memory_valid, prefix, batch, t);
    const auto& lg = logits.impl()->data;
    std::vector<std::size_t> next(batch * (t + 1));
    bool all_done = true;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* row = lg.data() + (b * t + (t - 1)) * vocab;
      const std::size_t best = std::size_t(std::max_element(row, row + vocab) - row);
      std::copy_n(prefix.begin() + b * t, t, next.begin() + b * (t + 1));
      next[b * (t + 1) + t] = done[b] ? kPad : best;
      if (!done[b]) {
        if (best == kEnd)
          done[b] = true;
        else
          out[b].push_back(best);
      }
      all_done = all_done && done[b];
    }
    if (all_done) break;
    prefix = std::move(next);
  }
  return out;
}

Tensor apply_channel(const Tensor& tx, std::span<const double> valid, ChannelKind kind, double snr_db,
                     std::mt19937_64& rng) {
  const std::size_t b = tx.dim(0), l = tx.dim(1), w = tx.dim(2);
  if (w % 2 != 0) throw ShapeError("apply_channel: last axis must hold (re, im) pairs, got " + shape_str(tx.shape()));
  const double noise_var = snr_to_noise_var(snr_db, 1.0);
  const auto& x = tx.impl()->data;
  std::vector<double> y(x);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<cplx> frame;
    for (std::size_t t = 0; t < l; ++t) {
      if (valid[i * l + t] == 0.0) continue;
      const double* row = x.data() + (i * l + t) * w;
      for (std::size_t s = 0; s < w; s += 2) frame.emplace_back(row[s], row[s + 1]);
    }
    const auto rx = pass_through_channel(frame, kind, noise_var, rng).equalized;
    std::size_t q = 0;
    for (std::size_t t = 0; t < l; ++t) {
      if (valid[i * l + t] == 0.0) continue;
      double* row = y.data() + (i * l + t) * w;
      for (std::size_t s = 0; s < w; s += 2, ++q) {
        row[s] = rx[q].real();
        row[s + 1] = rx[q].imag();
      }
    }
  }
  auto ti = tx.impl();
  return make_result(tx.shape(), std::move(y), {tx}, [ti](TensorImpl& o) {
    auto& g = ti->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------

ForwardState forward_pass(const ModelParams& params, const ModelConfig& cfg, const SourceBatch& src,
                          const TargetBatch* target, const ForwardOptions& opts, std::mt19937_64& rng,
                          const Tensor& perturbation) {
  ForwardState st;
  st.x_embed = embed(params.at("gamma"), src.ids, src.batch, src.len);
  const Tensor x = perturbation.defined() ? st.x_embed + perturbation : st.x_embed;
  st.p = detect_errors(params, x);
  st.features = semantic_encode(params, cfg, x, opts.calibrate ? st.p : Tensor{}, src.valid);
  st.tx = channel_encode(params, cfg, st.features, src.valid);
  st.rx = opts.channel == ChannelKind::identity ? st.tx : apply_channel(st.tx, src.valid, opts.channel, opts.snr_db, rng);
  st.received = channel_decode(params, cfg, st.rx);
  if (target) {
    if (target->batch != src.batch) throw ShapeError("forward_pass: source and target batch sizes differ");
    st.logits = semantic_decode_train(params, cfg, st.received, src.valid, target->input, target->batch, target->len);
  }
  return st;
}

std::vector<std::vector<std::size_t>> transceive(const ModelParams& params, const ModelConfig& cfg,
                                                 const SourceBatch& src, const ForwardOptions& opts,
                                                 std::mt19937_64& rng, const Tensor& perturbation) {
  NoGradScope no_grad;
  const ForwardState st = forward_pass(params, cfg, src, nullptr, opts, rng, perturbation);
  return semantic_decode_greedy(params, cfg, st.received, src.valid, src.batch, cfg.max_len - 1);
}

TransmitResult transmit_receive(const std::string& sentence, const ModelParams& params, const ModelConfig& cfg,
                                const Vocabulary& vocab, const VerbLexicon& lexicon, const ChannelConfig& channel,
                                const NoiseSpec& noise, bool calibrate) {
  TransmitResult r;
  r.sample = inject_literal_noise(encode(sentence, vocab), noise, vocab, lexicon);
  auto ids = r.sample.noisy.ids;
  if (ids.size() > cfg.max_len) ids.resize(cfg.max_len);
  const SourceBatch src = make_source_batch({ids});
  std::mt19937_64 rng(channel.seed);
  NoGradScope no_grad;
  const ForwardOptions opts{calibrate, channel.kind, channel.snr_db};
  const ForwardState st = forward_pass(params, cfg, src, nullptr, opts, rng);
  r.p.assign(st.p.data().begin(), st.p.data().end());
  r.received_ids = semantic_decode_greedy(params, cfg, st.received, src.valid, 1, cfg.max_len - 1).front();
  r.received = decode_ids(r.received_ids, vocab);
  return r;
}

}  // namespace rdsc
