#pragma once

// The R-DeepSC network. Activations are batched as (B, L, d_model) with a
// per-token validity mask; padding never influences valid positions.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rdsc/channel.hpp"
#include "rdsc/tensor.hpp"
#include "rdsc/text.hpp"

namespace rdsc {

struct ModelConfig {
  std::size_t vocab = 0;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t ffn = 512;
  std::size_t k_sym = 8;
  std::size_t max_len = 32;
  std::size_t d_det = 64;
  std::size_t d_mi = 64;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Named parameter tensors in a stable order.
class ModelParams {
 public:
  void add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::vector<Tensor> tensors_with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
  // Deep copy.
  ModelParams clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Xavier-uniform weights, zero biases, unit layer-norm gains. Includes the
// mutual-information estimator under the "mi." prefix.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Checks every tensor against the shapes implied by `cfg`.
void check_params(const ModelParams& params, const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Batches

struct SourceBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::size_t> ids;  // batch * len, padded with kPad
  std::vector<double> valid;     // 1 for real tokens
  std::vector<std::size_t> lengths;
};

struct TargetBatch {
  std::size_t batch = 0;
  std::size_t len = 0;              // decoder steps
  std::vector<std::size_t> input;   // <start> w1 .. wn, padded
  std::vector<std::size_t> output;  // w1 .. wn <end>, padded
};

SourceBatch make_source_batch(const std::vector<std::vector<std::size_t>>& seqs);
// Throws ShapeError if a target (with <start>/<end>) exceeds max_len.
TargetBatch make_target_batch(const std::vector<std::vector<std::size_t>>& seqs, std::size_t max_len);

// ---------------------------------------------------------------------------
// Building blocks

Tensor positional_encoding(std::size_t len, std::size_t d_model);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// gamma[ids] + sinusoidal positions, shape (B, L, d).
Tensor embed(const Tensor& gamma, std::span<const std::size_t> ids, std::size_t batch, std::size_t len);

// GRU over positions, linear head, sigmoid. Returns P with shape (B, L).
Tensor detect_errors(const ModelParams& params, const Tensor& x_embed);

// Masked softmax over the last axis of scores (B, H, Lq, Lk), followed by the
// calibration A'[j] = A[j](1 - P[j]) / sum_k A[k](1 - P[k]) when `p` (B, Lk)
// is defined. Rows whose calibration weights are all exactly 1 are passed
// through unchanged. A row with zero calibrated mass falls back to uniform over
// its admissible keys and increments the fallback counter.
Tensor calibrated_softmax(const Tensor& scores, const Tensor& p, std::span<const double> key_valid, bool causal);

// Rows that fell back to uniform attention on this thread since the last reset.
std::size_t attention_fallback_count();
void reset_attention_fallback_count();

// Multi-head attention with projections "<prefix>.wq" ... "<prefix>.bo".
// When `weights_out` is given it receives the attention distribution.
Tensor multi_head_attention(const ModelParams& params, const std::string& prefix, std::size_t heads,
                            const Tensor& query, const Tensor& memory, const Tensor& p,
                            std::span<const double> key_valid, bool causal, Tensor* weights_out = nullptr);

// N calibrated encoder layers. `p` may be undefined for plain attention.
Tensor semantic_encode(const ModelParams& params, const ModelConfig& cfg, const Tensor& x_embed, const Tensor& p,
                       std::span<const double> valid);

// Dense map to 2*k_sym reals per token, normalized so each sentence frame has
// unit mean complex-symbol power over its valid tokens. Padding is zeroed.
// Throws DiagnosticsError for a zero-power frame.
Tensor channel_encode(const ModelParams& params, const ModelConfig& cfg, const Tensor& features,
                      std::span<const double> valid);

// Dense 2*k_sym -> d_model, ReLU, dense d_model -> d_model.
Tensor channel_decode(const ModelParams& params, const ModelConfig& cfg, const Tensor& y);

// Teacher-forced decoder logits, shape (B, T, vocab).
Tensor semantic_decode_train(const ModelParams& params, const ModelConfig& cfg, const Tensor& memory,
                             std::span<const double> memory_valid, std::span<const std::size_t> target_input,
                             std::size_t batch, std::size_t target_len);

// Greedy generation from <start>; each result excludes <start> and <end> and
// has at most max_len tokens.
std::vector<std::vector<std::size_t>> semantic_decode_greedy(const ModelParams& params, const ModelConfig& cfg,
                                                             const Tensor& memory,
                                                             std::span<const double> memory_valid,
                                                             std::size_t batch, std::size_t max_len);

// Sends each sentence frame of `tx` (B, L, 2k) through the channel and
// equalizes. The result carries gradients straight through to `tx`.
Tensor apply_channel(const Tensor& tx, std::span<const double> valid, ChannelKind kind, double snr_db,
                     std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Composed pipeline

struct ForwardOptions {
  bool calibrate = true;  // false forces P = 0 in the encoder
  ChannelKind channel = ChannelKind::awgn;
  double snr_db = 12.0;
};

struct ForwardState {
  Tensor x_embed;  // before any perturbation
  Tensor p;
  Tensor features;  // semantic encoder output
  Tensor tx;
  Tensor rx;
  Tensor received;  // channel decoder output
  Tensor logits;  // defined when a target batch was supplied
};

// Embedding through channel decoding, plus teacher-forced logits when
// `target` is non-null. `perturbation`, when defined, is added to X_embed.
ForwardState forward_pass(const ModelParams& params, const ModelConfig& cfg, const SourceBatch& src,
                          const TargetBatch* target, const ForwardOptions& opts, std::mt19937_64& rng,
                          const Tensor& perturbation = {});

// Runs a batch end to end and returns greedy token sequences.
std::vector<std::vector<std::size_t>> transceive(const ModelParams& params, const ModelConfig& cfg,
                                                 const SourceBatch& src, const ForwardOptions& opts,
                                                 std::mt19937_64& rng, const Tensor& perturbation = {});

struct TransmitResult {
  NoisySample sample;
  std::vector<std::size_t> received_ids;
  std::string received;
  std::vector<double> p;
};

// inject_literal_noise -> network -> channel -> greedy decode -> text.
TransmitResult transmit_receive(const std::string& sentence, const ModelParams& params, const ModelConfig& cfg,
                                const Vocabulary& vocab, const VerbLexicon& lexicon, const ChannelConfig& channel,
                                const NoiseSpec& noise, bool calibrate = true);

}  // namespace rdsc
