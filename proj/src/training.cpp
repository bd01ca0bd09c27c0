#include "rdsc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rdsc/metrics.hpp"

namespace rdsc {

namespace {

constexpr double kBceClamp = 1e-7;

void check_finite(const Tensor& t, const char* what) {
  if (t.defined() && !std::isfinite(t.item()))
    throw DiagnosticsError(std::string("loss: non-finite ") + what + " (" + std::to_string(t.item()) + ")");
}

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

void AdversarialConfig::validate() const {
  if (enabled && !(epsilon > 0.0)) throw ConfigError("epsilon: must be > 0 when adversarial training is enabled");
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 3) throw ShapeError("cross_entropy_loss: logits must be (B,T,V), got " + shape_str(logits.shape()));
  const std::size_t v = logits.dim(2), rows = logits.dim(0) * logits.dim(1);
  if (targets.size() != rows)
    throw ShapeError("cross_entropy_loss: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  const auto& x = logits.impl()->data;
  auto probs = std::make_shared<std::vector<double>>(x.size(), 0.0);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  std::size_t count = 0;
  double nll = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tg[r] == kPad) continue;
    if (tg[r] >= v) throw IndexError("cross_entropy_loss: target index out of range");
    ++count;
    const double* row = x.data() + r * v;
    double* pr = probs->data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += (pr[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < v; ++j) pr[j] /= z;
    nll += std::log(z) - (row[tg[r]] - mx);
  }
  if (count == 0) throw ShapeError("cross_entropy_loss: every target position is <pad>");
  auto li = logits.impl();
  return make_result({}, {nll / double(count)}, {logits}, [li, probs, tg, v, count](TensorImpl& o) {
    auto& g = li->ensure_grad();
    const double s = o.grad[0] / double(count);
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (tg[r] == kPad) continue;
      const double* pr = probs->data() + r * v;
      double* gr = g.data() + r * v;
      for (std::size_t j = 0; j < v; ++j) gr[j] += s * pr[j];
      gr[tg[r]] -= s;
    }
  });
}

MiEstimator MiEstimator::create(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MiEstimator e;
  e.w1 = Tensor::uniform({input_dim, hidden}, rng, std::sqrt(6.0 / double(input_dim + hidden)), true);
  e.b1 = Tensor::zeros({hidden}, true);
  e.w2 = Tensor::uniform({hidden, 1}, rng, std::sqrt(6.0 / double(hidden + 1)), true);
  e.b2 = Tensor::zeros({1}, true);
  return e;
}

MiEstimator MiEstimator::from_params(const ModelParams& params) {
  return {params.at("mi.w1"), params.at("mi.b1"), params.at("mi.w2"), params.at("mi.b2")};
}

Tensor MiEstimator::statistic(const Tensor& x, const Tensor& y) const {
  return linear(relu(linear(concat({x, y}, 1), w1, b1)), w2, b2);
}

Tensor mine_mi_lower_bound(const MiEstimator& est, const Tensor& x, const Tensor& y, std::mt19937_64& rng) {
  if (x.rank() != 2 || x.shape() != y.shape())
    throw ShapeError("mine_mi_lower_bound: x " + shape_str(x.shape()) + " and y " + shape_str(y.shape()) +
                     " must be matching (N, F)");
  const std::size_t n = x.dim(0);
  if (n < 2) throw ShapeError("mine_mi_lower_bound: need at least 2 samples to shuffle");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Tensor joint = est.statistic(x, y);
  const Tensor marginal = est.statistic(x, embedding_lookup(y, perm));
  return mean(joint) - (logsumexp(marginal) - std::log(double(n)));
}

Tensor detection_bce(const Tensor& p, std::span<const double> labels, std::span<const double> mask) {
  if (labels.size() != p.numel() || mask.size() != p.numel())
    throw ShapeError("detection_bce: " + std::to_string(labels.size()) + " labels for " + std::to_string(p.numel()) +
                     " probabilities");
  const auto& pv = p.impl()->data;
  double loss = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double q = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
    loss -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
    count += 1.0;
  }
  if (count == 0.0) throw ShapeError("detection_bce: no valid positions");
  auto pi = p.impl();
  std::vector<double> lb(labels.begin(), labels.end()), mk(mask.begin(), mask.end());
  return make_result({}, {loss / count}, {p}, [pi, lb, mk, count](TensorImpl& o) {
    auto& g = pi->ensure_grad();
    const double s = o.grad[0] / count;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = pi->data[i];
      if (mk[i] == 0.0 || q < kBceClamp || q > 1.0 - kBceClamp) continue;
      g[i] += s * (-lb[i] / q + (1.0 - lb[i]) / (1.0 - q));
    }
  });
}

LossTerms total_loss(const Tensor& ce, const Tensor& mi, const Tensor& bce, const LossWeights& w) {
  check_finite(ce, "cross-entropy");
  check_finite(mi, "mutual-information bound");
  check_finite(bce, "detection BCE");
  LossTerms t{ce, mi, bce, ce, {}};
  if (w.alpha != 0.0) {
    if (!mi.defined()) throw ShapeError("total_loss: alpha != 0 but no MI term");
    t.total = t.total - w.alpha * mi;
  }
  if (w.beta != 0.0) {
    if (!bce.defined()) throw ShapeError("total_loss: beta != 0 but no BCE term");
    t.total = t.total + w.beta * bce;
  }
  t.breakdown = {ce.item(), value_or_zero(mi), value_or_zero(bce), t.total.item(), w.alpha, w.beta};
  check_finite(t.total, "total");
  return t;
}

Perturbation fgm_perturbation(const Tensor& grad, double epsilon) {
  const auto g = grad.data();
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm == 0.0 || !std::isfinite(norm)) return {Tensor::zeros(grad.shape()), true};
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = epsilon * (g[i] / norm);
  return {Tensor::from(grad.shape(), std::move(out)), false};
}

Tensor gather_valid(const Tensor& x, std::span<const double> valid) {
  const std::size_t b = x.dim(0), l = x.dim(1), f = x.dim(2);
  if (valid.size() != b * l) throw ShapeError("gather_valid: mask does not match " + shape_str(x.shape()));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i] != 0.0) rows.push_back(i);
  return embedding_lookup(reshape(x, {b * l, f}), rows);
}

TrainBatch make_train_batch(const std::vector<NoisySample>& samples, std::size_t max_len) {
  std::vector<std::vector<std::size_t>> src, tgt;
  for (const auto& s : samples) {
    src.push_back(s.noisy.ids);
    tgt.push_back(s.clean.ids);
  }
  TrainBatch b{make_source_batch(src), make_target_batch(tgt, max_len), {}};
  b.labels.assign(b.src.ids.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t t = 0; t < samples[i].labels.size(); ++t) b.labels[i * b.src.len + t] = samples[i].labels[t];
  return b;
}

LossTerms batch_loss(const ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch,
                     const StepOptions& opts, std::mt19937_64& rng, const Tensor& perturbation,
                     ForwardState* state) {
  ForwardState st = forward_pass(params, cfg, batch.src, &batch.tgt, opts.forward, rng, perturbation);
  const Tensor ce = cross_entropy_loss(st.logits, batch.tgt.output);
  Tensor mi, bce;
  if (opts.weights.alpha != 0.0)
    mi = mine_mi_lower_bound(MiEstimator::from_params(params), gather_valid(st.tx, batch.src.valid),
                             gather_valid(st.rx, batch.src.valid), rng);
  if (opts.weights.beta != 0.0) bce = detection_bce(st.p, batch.labels, batch.src.valid);
  LossTerms terms = total_loss(ce, mi, bce, opts.weights);
  if (state) *state = std::move(st);
  return terms;
}

Perturbation adversarial_perturbation(const ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch,
                                      const StepOptions& opts, std::mt19937_64& rng) {
  Tape tape;
  TapeScope scope(tape);
  // a zero leaf added to X_embed carries its gradient even when the
  // parameters themselves are frozen
  Tensor probe = Tensor::zeros({batch.src.batch, batch.src.len, cfg.d_model}).set_requires_grad(true);
  const LossTerms terms = batch_loss(params, cfg, batch, opts, rng, probe);
  tape.backward(opts.adv.loss_choice == AttackLoss::ce ? terms.ce : terms.total);
  const Tensor grad = Tensor::from(probe.shape(), probe.grad());
  for (Tensor t : params.tensors()) t.zero_grad();
  return fgm_perturbation(grad, opts.adv.epsilon);
}

StepResult train_step(ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch, const StepOptions& opts,
                      Adam& optimizer, std::mt19937_64& rng) {
  StepResult result;
  params.zero_grad();
  const std::mt19937_64 start = rng;
  if (!opts.adv.enabled) {
    Tape tape;
    TapeScope scope(tape);
    const LossTerms clean = batch_loss(params, cfg, batch, opts, rng);
    tape.backward(clean.total);
    optimizer.step();
    result.clean = clean.breakdown;
    return result;
  }
  std::mt19937_64 attack_rng = start;
  const Perturbation pa = adversarial_perturbation(params, cfg, batch, opts, attack_rng);
  result.zero_gradient = pa.zero_gradient;
  Tape tape;
  TapeScope scope(tape);
  const LossTerms clean = batch_loss(params, cfg, batch, opts, rng);
  std::mt19937_64 adv_rng = start;
  const LossTerms adv = batch_loss(params, cfg, batch, opts, adv_rng, pa.n_a);
  result.adversarial_forwards = 1;
  tape.backward((clean.total + adv.total) * 0.5);
  optimizer.step();
  result.clean = clean.breakdown;
  result.adversarial = adv.breakdown;
  return result;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs: must be >= 1");
  if (batch == 0) throw ConfigError("batch: must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) throw ConfigError("noise_ratio: must lie in [0, 1]");
  if (noise_kinds.empty()) throw ConfigError("noise_kinds: at least one kind is required");
  if (!(step.weights.alpha >= 0.0)) throw ConfigError("alpha: must be >= 0");
  if (!(step.weights.beta >= 0.0)) throw ConfigError("beta: must be >= 0");
  step.adv.validate();
}

TrainState fresh_state(const ModelConfig& cfg, const TrainConfig& tc) {
  TrainState s;
  s.params = init_params(cfg, derive_seed(tc.seed, 0x9a9a));
  s.optimizer = adam_init(s.params.tensors(), {.lr = tc.lr});
  return s;
}

std::vector<NoisySample> corrupt_all(const std::vector<TokenSequence>& clean, double ratio,
                                     const std::vector<NoiseKind>& kinds, std::uint64_t seed, const Vocabulary& vocab,
                                     const VerbLexicon& lexicon) {
  std::vector<NoisySample> out;
  out.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i)
    out.push_back(inject_literal_noise(clean[i], {ratio, kinds, derive_seed(seed, i)}, vocab, lexicon));
  return out;
}

void round_to_float32(std::span<double> values) {
  for (auto& v : values) v = double(float(v));
}

void train(TrainState& state, const ModelConfig& cfg, const TrainConfig& tc, const std::vector<TokenSequence>& corpus,
           const std::vector<TokenSequence>& validation, const Vocabulary& vocab, const VerbLexicon& lexicon,
           const EpochCallback& on_epoch) {
  tc.validate();
  check_params(state.params, cfg);
  if (corpus.empty()) throw ConfigError("corpus: no training sentences");
  state.params.set_requires_grad(true);
  Adam optimizer(state.params.tensors(), {.lr = tc.lr});
  if (!state.optimizer.m.empty()) optimizer.state() = state.optimizer;
  optimizer.state().config.lr = tc.lr;

  const std::size_t n_val = std::min(tc.val_sentences, validation.size());
  const std::vector<TokenSequence> val(validation.begin(), validation.begin() + std::ptrdiff_t(n_val));
  const auto val_noisy = corrupt_all(val, tc.noise_ratio, tc.noise_kinds, derive_seed(tc.seed, 0x7a1), vocab, lexicon);

  for (std::size_t epoch = state.epochs_done; epoch < tc.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(tc.seed, epoch + 1);
    std::mt19937_64 rng(epoch_seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch + 1;
    double adv_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      std::vector<NoisySample> samples;
      for (std::size_t k = start; k < std::min(order.size(), start + tc.batch); ++k) {
        const std::size_t idx = order[k];
        samples.push_back(inject_literal_noise(corpus[idx], {tc.noise_ratio, tc.noise_kinds, derive_seed(epoch_seed, idx)},
                                               vocab, lexicon));
      }
      const TrainBatch batch = make_train_batch(samples, cfg.max_len);
      StepResult r;
      try {
        r = train_step(state.params, cfg, batch, tc.step, optimizer, rng);
      } catch (const DiagnosticsError& e) {
        throw DiagnosticsError("train: epoch " + std::to_string(epoch + 1) + ", batch " +
                               std::to_string(start / tc.batch) + ": " + e.what());
      }
      log.mean.l_ce += r.clean.l_ce;
      log.mean.l_mi += r.clean.l_mi;
      log.mean.l_bce += r.clean.l_bce;
      log.mean.total += r.clean.total;
      if (r.adversarial) adv_sum += r.adversarial->total;
      ++log.steps;
    }
    const double n = double(log.steps);
    log.mean.l_ce /= n;
    log.mean.l_mi /= n;
    log.mean.l_bce /= n;
    log.mean.total /= n;
    log.mean.alpha = tc.step.weights.alpha;
    log.mean.beta = tc.step.weights.beta;
    if (tc.step.adv.enabled) log.adv_total = adv_sum / n;

    for (auto& t : state.params.tensors()) round_to_float32(t.mutable_data());
    for (auto& m : optimizer.state().m) round_to_float32(m);
    for (auto& v : optimizer.state().v) round_to_float32(v);
    if (!val_noisy.empty())
      log.val_bleu = evaluate_bleu(state.params, cfg, val_noisy, tc.step.forward, derive_seed(tc.seed, 0x7a2), vocab);

    state.optimizer = optimizer.state();
    state.epochs_done = epoch + 1;
    state.log.push_back(log);
    if (on_epoch && !on_epoch(state)) break;
  }
}

double evaluate_bleu(const ModelParams& params, const ModelConfig& cfg, const std::vector<NoisySample>& samples,
                     const ForwardOptions& opts, std::uint64_t seed, const Vocabulary& vocab, std::size_t batch) {
  if (samples.empty()) throw ShapeError("evaluate_bleu: no samples");
  std::mt19937_64 rng(seed);
  std::vector<Tokens> cands, refs;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::vector<std::size_t>> src;
    for (std::size_t k = start; k < std::min(samples.size(), start + batch); ++k) {
      src.push_back(samples[k].noisy.ids);
      refs.push_back(samples[k].clean.surface);
    }
    for (const auto& ids : transceive(params, cfg, make_source_batch(src), opts, rng)) {
      Tokens t;
      for (auto id : ids) t.push_back(vocab.token(id));
      cands.push_back(std::move(t));
    }
  }
  return bleu(cands, refs);
}

double evaluate_ce(const ModelParams& params, const ModelConfig& cfg, const std::vector<NoisySample>& samples,
                   const StepOptions& opts, std::optional<double> attack_epsilon, std::uint64_t seed,
                   std::size_t batch) {
  if (samples.empty()) throw ShapeError("evaluate_ce: no samples");
  StepOptions o = opts;
  o.weights = {0.0, 0.0};
  double weighted = 0.0, tokens = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::vector<NoisySample> part(samples.begin() + std::ptrdiff_t(start),
                                        samples.begin() + std::ptrdiff_t(std::min(samples.size(), start + batch)));
    const TrainBatch b = make_train_batch(part, cfg.max_len);
    Tensor n_a;
    const std::mt19937_64 snapshot(derive_seed(seed, start));
    if (attack_epsilon) {
      o.adv.epsilon = *attack_epsilon;
      std::mt19937_64 r = snapshot;
      n_a = adversarial_perturbation(params, cfg, b, o, r).n_a;
    }
    NoGradScope no_grad;
    std::mt19937_64 r = snapshot;
    const double ce = batch_loss(params, cfg, b, o, r, n_a).breakdown.l_ce;
    double count = 0.0;
    for (auto id : b.tgt.output) count += id != kPad;
    weighted += ce * count;
    tokens += count;
  }
  return weighted / tokens;
}

}  // namespace rdsc
