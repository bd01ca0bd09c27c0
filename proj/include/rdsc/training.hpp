#pragma once

// Composite loss (cross-entropy, mutual-information bound, detection BCE), the
// FGM perturbation and the clean + adversarial training loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rdsc/transceiver.hpp"

namespace rdsc {

struct LossWeights {
  double alpha = 0.05;
  double beta = 1.0;
};

struct LossBreakdown {
  double l_ce = 0.0;
  double l_mi = 0.0;  // the bound itself, reported positively
  double l_bce = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

enum class AttackLoss { ce, total };

struct AdversarialConfig {
  bool enabled = false;
  double epsilon = 0.5;
  AttackLoss loss_choice = AttackLoss::ce;

  void validate() const;
};

// Mean NLL over positions whose target is not <pad>. logits (B, T, V).
Tensor cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> targets);

// Statistics network T(x, y): concat -> dense -> ReLU -> dense.
struct MiEstimator {
  Tensor w1, b1, w2, b2;

  static MiEstimator create(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);
  // Views the "mi." tensors of a model (shared storage).
  static MiEstimator from_params(const ModelParams& params);
  std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
  Tensor statistic(const Tensor& x, const Tensor& y) const;
};

// Donsker-Varadhan bound mean T(x, y) - log mean exp T(x, y') with y' a
// within-batch shuffle of the rows of y. x, y: (N, F); throws for N < 2.
Tensor mine_mi_lower_bound(const MiEstimator& est, const Tensor& x, const Tensor& y, std::mt19937_64& rng);

// Mean binary cross-entropy over positions with mask != 0, probabilities
// clamped to [1e-7, 1 - 1e-7].
Tensor detection_bce(const Tensor& p, std::span<const double> labels, std::span<const double> mask);

struct LossTerms {
  Tensor ce, mi, bce, total;
  LossBreakdown breakdown;
};

// total = ce - alpha * mi + beta * bce; zero-weight terms may be undefined.
// Throws DiagnosticsError on a non-finite component.
LossTerms total_loss(const Tensor& ce, const Tensor& mi, const Tensor& bce, const LossWeights& w);

struct Perturbation {
  Tensor n_a;
  bool zero_gradient = false;
};

// N_A = epsilon * g / ||g||_2 over the whole tensor.
Perturbation fgm_perturbation(const Tensor& grad, double epsilon);

// Gathers rows of a (B, L, F) tensor at valid positions into (N, F).
Tensor gather_valid(const Tensor& x, std::span<const double> valid);

struct TrainBatch {
  SourceBatch src;
  TargetBatch tgt;
  std::vector<double> labels;  // per source position, aligned with src.ids
};

// Noisy source, clean target and detection labels for a list of samples.
TrainBatch make_train_batch(const std::vector<NoisySample>& samples, std::size_t max_len);

struct StepOptions {
  LossWeights weights;
  AdversarialConfig adv;
  ForwardOptions forward;
};

// Forward pass and loss terms for a batch. `rng` drives channel noise and the
// MI shuffle.
LossTerms batch_loss(const ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch,
                     const StepOptions& opts, std::mt19937_64& rng, const Tensor& perturbation = {},
                     ForwardState* state = nullptr);

// Gradient of the attack loss w.r.t. X_embed, then the FGM perturbation.
Perturbation adversarial_perturbation(const ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch,
                                      const StepOptions& opts, std::mt19937_64& rng);

struct StepResult {
  LossBreakdown clean;
  std::optional<LossBreakdown> adversarial;
  std::size_t adversarial_forwards = 0;
  bool zero_gradient = false;
};

// One optimizer step. Without adversarial training: minimize the clean total.
// With it: attack, then minimize (clean total + adversarial total) / 2, where
// both forwards see the same channel realization.
StepResult train_step(ModelParams& params, const ModelConfig& cfg, const TrainBatch& batch, const StepOptions& opts,
                      Adam& optimizer, std::mt19937_64& rng);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 1e-3;
  double noise_ratio = 0.2;
  std::vector<NoiseKind> noise_kinds{NoiseKind::replacement, NoiseKind::mask, NoiseKind::insertion, NoiseKind::verb};
  StepOptions step;
  std::uint64_t seed = 1;
  std::size_t val_sentences = 64;  // 0 disables validation BLEU

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean;
  std::optional<double> adv_total;
  double val_bleu = 0.0;
  std::size_t steps = 0;
};

struct TrainState {
  ModelParams params;
  AdamState optimizer;
  std::size_t epochs_done = 0;
  std::vector<EpochLog> log;
};

// Called after each epoch; may persist the state. Returning false stops.
using EpochCallback = std::function<bool(const TrainState&)>;

// Epoch loop over shuffled mini-batches. All randomness of epoch e derives
// from (seed, e), so a state restored after epoch e continues exactly as the
// uninterrupted run. At each epoch end the parameters and optimizer moments
// are rounded to float32, the checkpoint precision.
void train(TrainState& state, const ModelConfig& cfg, const TrainConfig& tc, const std::vector<TokenSequence>& corpus,
           const std::vector<TokenSequence>& validation, const Vocabulary& vocab, const VerbLexicon& lexicon,
           const EpochCallback& on_epoch = {});

TrainState fresh_state(const ModelConfig& cfg, const TrainConfig& tc);

// Noisy versions of `clean`, seeded per sentence from (seed, index).
std::vector<NoisySample> corrupt_all(const std::vector<TokenSequence>& clean, double ratio,
                                     const std::vector<NoiseKind>& kinds, std::uint64_t seed, const Vocabulary& vocab,
                                     const VerbLexicon& lexicon);

// Greedy decoding of noisy inputs; corpus BLEU against the clean sentences.
double evaluate_bleu(const ModelParams& params, const ModelConfig& cfg, const std::vector<NoisySample>& samples,
                     const ForwardOptions& opts, std::uint64_t seed, const Vocabulary& vocab,
                     std::size_t batch = 64);

// Mean CE over the samples, optionally under an FGM attack of size epsilon.
double evaluate_ce(const ModelParams& params, const ModelConfig& cfg, const std::vector<NoisySample>& samples,
                   const StepOptions& opts, std::optional<double> attack_epsilon, std::uint64_t seed,
                   std::size_t batch = 64);

void round_to_float32(std::span<double> values);

}  // namespace rdsc
