#include "rdsc/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace rdsc {

void BleuConfig::validate() const {
  if (max_n == 0) throw ConfigError("bleu.max_n: must be >= 1");
  if (weights.empty()) return;
  if (weights.size() != max_n)
    throw ConfigError("bleu.weights: expected " + std::to_string(max_n) + " weights, got " +
                      std::to_string(weights.size()));
  double s = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("bleu.weights: weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("bleu.weights: weights must sum to 1");
}

std::vector<double> BleuConfig::resolved_weights() const {
  validate();
  return weights.empty() ? std::vector<double>(max_n, 1.0 / double(max_n)) : weights;
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
  if (candidate_len == 0 || reference_len == 0) throw DomainError("brevity_penalty: lengths must be >= 1");
  if (candidate_len >= reference_len) return 1.0;
  return std::exp(1.0 - double(reference_len) / double(candidate_len));
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, const BleuConfig& cfg) {
  if (candidates.size() != references.size())
    throw ShapeError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                     std::to_string(references.size()) + " references");
  if (candidates.empty()) throw ShapeError("bleu: empty corpus");
  const auto w = cfg.resolved_weights();
  std::vector<NgramStats> pooled(cfg.max_n);
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= cfg.max_n; ++n) {
      const auto s = clipped_ngram_stats(candidates[i], references[i], n);
      pooled[n - 1].matched += s.matched;
      pooled[n - 1].total += s.total;
    }
  }
  if (cand_len == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < cfg.max_n; ++n) {
    if (w[n] == 0.0) continue;
    if (pooled[n].matched == 0) return 0.0;
    log_p += w[n] * std::log(double(pooled[n].matched) / double(pooled[n].total));
  }
  return brevity_penalty(cand_len, ref_len) * std::exp(log_p);
}

double sentence_bleu(const Tokens& candidate, const Tokens& reference, const BleuConfig& cfg) {
  return bleu({candidate}, {reference}, cfg);
}

double IdfTable::unseen() const { return std::log(double(1 + documents)); }

double IdfTable::operator()(const std::string& token) const {
  auto it = weights.find(token);
  return it == weights.end() ? unseen() : it->second;
}

IdfTable idf_weights(const std::vector<Tokens>& corpus) {
  if (corpus.empty()) throw ShapeError("idf_weights: empty corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& sentence : corpus)
    for (const auto& t : std::set<std::string>(sentence.begin(), sentence.end())) ++df[t];
  IdfTable table;
  table.documents = corpus.size();
  const double m1 = double(corpus.size() + 1);
  for (const auto& [t, n] : df) table.weights[t] = -std::log(double(1 + n) / m1);
  return table;
}

SimilarityResult similarity_precision(const std::vector<std::vector<double>>& transmitted,
                                      const std::vector<std::vector<double>>& received,
                                      const std::vector<double>& received_idf) {
  if (transmitted.empty() || received.empty()) throw ShapeError("similarity_precision: empty sequence");
  if (received_idf.size() != received.size())
    throw ShapeError("similarity_precision: idf weights do not match received tokens");
  SimilarityResult r;
  double mass = std::accumulate(received_idf.begin(), received_idf.end(), 0.0);
  r.uniform_fallback = !(mass > 0.0);
  double num = 0.0;
  for (std::size_t i = 0; i < received.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& t : transmitted) {
      if (t.size() != received[i].size()) throw ShapeError("similarity_precision: embedding sizes differ");
      best = std::max(best, std::inner_product(t.begin(), t.end(), received[i].begin(), 0.0));
    }
    num += (r.uniform_fallback ? 1.0 : received_idf[i]) * best;
  }
  r.value = num / (r.uniform_fallback ? double(received.size()) : mass);
  return r;
}

SimilarityResult similarity_precision(const Tokens& transmitted, const Tokens& received,
                                      const EmbeddingProvider& provider, const IdfTable& idf) {
  std::vector<double> w;
  for (const auto& t : received) w.push_back(idf(t));
  return similarity_precision(provider.embed(transmitted), provider.embed(received), w);
}

double rescale_similarity(double p, double b) {
  if (!(b < 1.0)) throw DomainError("rescale_similarity: baseline b must be < 1");
  return (p - b) / (1.0 - b);
}

double empirical_baseline(const std::vector<Tokens>& corpus, const EmbeddingProvider& provider, const IdfTable& idf,
                          std::size_t pairs, std::uint64_t seed) {
  if (corpus.size() < 2) throw ShapeError("empirical_baseline: need at least two sentences");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  double s = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    s += similarity_precision(corpus[a], corpus[b], provider, idf).value;
  }
  return s / double(pairs);
}

}  // namespace rdsc
