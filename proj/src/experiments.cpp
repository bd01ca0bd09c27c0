#include "rdsc/experiments.hpp"

#include <cmath>
#include <sstream>

namespace rdsc {

std::vector<std::vector<double>> EncoderEmbeddingProvider::embed(const Tokens& tokens) const {
  NoGradScope no_grad;
  std::vector<std::vector<double>> out;
  const std::size_t d = cfg_.d_model;
  for (std::size_t start = 0; start < tokens.size(); start += cfg_.max_len) {
    const std::size_t len = std::min(cfg_.max_len, tokens.size() - start);
    std::vector<std::size_t> ids(len);
    for (std::size_t i = 0; i < len; ++i) ids[i] = vocab_.index_of(tokens[start + i]);
    const std::vector<double> valid(len, 1.0);
    const Tensor x = rdsc::embed(params_.at("gamma"), ids, 1, len);
    const Tensor h = semantic_encode(params_, cfg_, x, Tensor{}, valid);
    const auto& data = h.data();
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> row(data.begin() + std::ptrdiff_t(i * d), data.begin() + std::ptrdiff_t((i + 1) * d));
      double n = 0.0;
      for (double v : row) n += v * v;
      n = std::sqrt(n);
      if (n > 0.0)
        for (double& v : row) v /= n;
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::uint64_t noise_seed(std::uint64_t seed, double ratio) {
  return derive_seed(derive_seed(seed, 0x6e6f), std::uint64_t(std::llround(ratio * 1000.0)));
}

std::uint64_t cell_seed(std::uint64_t seed, ChannelKind kind, double snr_db, double ratio) {
  std::uint64_t s = derive_seed(seed, 0x63686e + std::uint64_t(kind));
  s = derive_seed(s, std::uint64_t(std::llround((snr_db + 1000.0) * 1000.0)));
  return derive_seed(s, std::uint64_t(std::llround(ratio * 1000.0)));
}

std::vector<Tokens> receive_all(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<NoisySample>& samples, const ForwardOptions& opts,
                                std::uint64_t seed, const Vocabulary& vocab, std::size_t batch) {
  std::mt19937_64 rng(seed);
  std::vector<Tokens> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::vector<std::size_t>> src;
    for (std::size_t k = start; k < std::min(samples.size(), start + batch); ++k) src.push_back(samples[k].noisy.ids);
    for (const auto& ids : transceive(params, cfg, make_source_batch(src), opts, rng)) {
      Tokens t;
      for (auto id : ids) t.push_back(vocab.token(id));
      out.push_back(std::move(t));
    }
  }
  return out;
}

namespace {

void check_sweep(const std::vector<TokenSequence>& test, const SweepConfig& sweep) {
  if (test.empty()) throw ShapeError("sweep: empty test set");
  if (sweep.snr_list.empty()) throw ConfigError("snr_list: must not be empty");
  if (sweep.noise_ratios.empty()) throw ConfigError("noise_ratios: must not be empty");
}

double mean_similarity(const std::vector<Tokens>& refs, const std::vector<Tokens>& received,
                       const EmbeddingProvider& provider, const IdfTable& idf, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (received[i].empty()) continue;  // nothing received scores 0
    total += rescale_similarity(similarity_precision(refs[i], received[i], provider, idf).value, b);
  }
  return total / double(refs.size());
}

Tokens split_spaces(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

MetricsReport evaluate_sweep(const ModelParams& params, const ModelConfig& cfg, const std::vector<TokenSequence>& test,
                             const Vocabulary& vocab, const VerbLexicon& lexicon, const IdfTable& idf,
                             const SweepConfig& sweep) {
  check_sweep(test, sweep);
  EncoderEmbeddingProvider provider(params, cfg, vocab);
  MetricsReport rep;
  for (double ratio : sweep.noise_ratios) {
    const auto samples = corrupt_all(test, ratio, sweep.kinds, noise_seed(sweep.seed, ratio), vocab, lexicon);
    std::vector<Tokens> refs;
    for (const auto& s : samples) refs.push_back(s.clean.surface);
    for (double snr : sweep.snr_list) {
      const ForwardOptions opts{.calibrate = sweep.calibrate, .channel = sweep.channel, .snr_db = snr};
      const auto received =
          receive_all(params, cfg, samples, opts, cell_seed(sweep.seed, sweep.channel, snr, ratio), vocab, sweep.batch);
      MetricsRow row{sweep.model_id, to_string(sweep.channel), snr, ratio, bleu(received, refs), 0.0,
                     samples.size(), sweep.seed};
      if (sweep.compute_similarity) row.sim_score = mean_similarity(refs, received, provider, idf, sweep.similarity_b);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

MetricsReport baseline_sweep(const ClassicalChain& chain, const std::vector<TokenSequence>& test,
                             const Vocabulary& vocab, const VerbLexicon& lexicon, const SweepConfig& sweep,
                             const EmbeddingProvider* provider, const IdfTable* idf) {
  check_sweep(test, sweep);
  MetricsReport rep;
  for (double ratio : sweep.noise_ratios) {
    const auto samples = corrupt_all(test, ratio, sweep.kinds, noise_seed(sweep.seed, ratio), vocab, lexicon);
    std::vector<Tokens> refs;
    for (const auto& s : samples) refs.push_back(s.clean.surface);
    for (double snr : sweep.snr_list) {
      std::mt19937_64 rng(cell_seed(sweep.seed, sweep.channel, snr, ratio));
      std::vector<Tokens> received;
      for (const auto& s : samples) {
        std::string text;
        for (std::size_t i = 0; i < s.noisy.surface.size(); ++i) text += (i ? " " : "") + s.noisy.surface[i];
        received.push_back(split_spaces(chain.transmit(text, sweep.channel, snr, rng).text));
      }
      MetricsRow row{sweep.model_id, to_string(sweep.channel), snr, ratio, bleu(received, refs), 0.0,
                     samples.size(), sweep.seed};
      if (provider && idf) row.sim_score = mean_similarity(refs, received, *provider, *idf, sweep.similarity_b);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

double passthrough_bleu(const std::vector<NoisySample>& samples) {
  std::vector<Tokens> cands, refs;
  for (const auto& s : samples) {
    cands.push_back(s.noisy.surface);
    refs.push_back(s.clean.surface);
  }
  return bleu(cands, refs);
}

}  // namespace rdsc
