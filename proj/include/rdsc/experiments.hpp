#pragma once

// SNR x noise-ratio sweeps for the learned transceiver and the classical
// chain, producing MetricsReport rows.

#include <cstdint>
#include <string>
#include <vector>

#include "rdsc/classical.hpp"
#include "rdsc/metrics.hpp"
#include "rdsc/report.hpp"
#include "rdsc/training.hpp"

namespace rdsc {

// Token embeddings from the semantic encoder, run without error calibration,
// each row L2-normalized.
class EncoderEmbeddingProvider : public EmbeddingProvider {
 public:
  EncoderEmbeddingProvider(const ModelParams& params, const ModelConfig& cfg, const Vocabulary& vocab)
      : params_(params), cfg_(cfg), vocab_(vocab) {}
  std::vector<std::vector<double>> embed(const Tokens& tokens) const override;

 private:
  const ModelParams& params_;
  const ModelConfig& cfg_;
  const Vocabulary& vocab_;
};

struct SweepConfig {
  std::string model_id = "rdeepsc";
  std::vector<double> snr_list{0, 3, 6, 9, 12, 15, 18};
  std::vector<double> noise_ratios{0.0, 0.2};
  ChannelKind channel = ChannelKind::awgn;
  std::vector<NoiseKind> kinds{NoiseKind::replacement, NoiseKind::mask, NoiseKind::insertion, NoiseKind::verb};
  bool calibrate = true;
  double similarity_b = 0.0;
  bool compute_similarity = true;
  std::uint64_t seed = 1;
  std::size_t batch = 64;
};

// Noise for ratio r is seeded from (seed, round(1000 r)), so every SNR and
// every model sees the same corrupted test set for a given ratio.
std::uint64_t noise_seed(std::uint64_t seed, double ratio);
// Channel stream of one (snr, ratio) cell.
std::uint64_t cell_seed(std::uint64_t seed, ChannelKind kind, double snr_db, double ratio);

// Received token lists for noisy samples sent through the network.
std::vector<Tokens> receive_all(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<NoisySample>& samples, const ForwardOptions& opts,
                                std::uint64_t seed, const Vocabulary& vocab, std::size_t batch = 64);

// One row per (snr, ratio): corpus BLEU against the clean sentences and mean
// rescaled similarity precision (0 when compute_similarity is off).
MetricsReport evaluate_sweep(const ModelParams& params, const ModelConfig& cfg, const std::vector<TokenSequence>& test,
                             const Vocabulary& vocab, const VerbLexicon& lexicon, const IdfTable& idf,
                             const SweepConfig& sweep);

// Same grid for the classical chain; the noisy sentence text is what it sends.
// Similarity is scored with `provider` when given.
MetricsReport baseline_sweep(const ClassicalChain& chain, const std::vector<TokenSequence>& test,
                             const Vocabulary& vocab, const VerbLexicon& lexicon, const SweepConfig& sweep,
                             const EmbeddingProvider* provider = nullptr, const IdfTable* idf = nullptr);

// BLEU(noisy, clean): the score of a system that corrects nothing.
double passthrough_bleu(const std::vector<NoisySample>& samples);

}  // namespace rdsc
