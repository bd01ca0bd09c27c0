#pragma once

// Corpus BLEU and an idf-weighted embedding-similarity precision.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rdsc/errors.hpp"

namespace rdsc {

struct NgramStats {
  std::size_t matched = 0;
  std::size_t total = 0;
  bool operator==(const NgramStats&) const = default;
};

// Clipped n-gram matches of `candidate` against `reference`.
template <class T>
NgramStats clipped_ngram_stats(const std::vector<T>& candidate, const std::vector<T>& reference, std::size_t n) {
  if (n == 0) throw DomainError("clipped_ngram_stats: n must be >= 1");
  NgramStats s;
  if (candidate.size() < n) return s;
  std::map<std::vector<T>, std::size_t> ref_counts, cand_counts;
  for (std::size_t i = 0; i + n <= reference.size(); ++i)
    ++ref_counts[std::vector<T>(reference.begin() + i, reference.begin() + i + n)];
  for (std::size_t i = 0; i + n <= candidate.size(); ++i)
    ++cand_counts[std::vector<T>(candidate.begin() + i, candidate.begin() + i + n)];
  s.total = candidate.size() - n + 1;
  for (const auto& [gram, c] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) s.matched += std::min(c, it->second);
  }
  return s;
}

struct BleuConfig {
  std::size_t max_n = 4;
  std::vector<double> weights;  // empty means uniform 1/max_n

  void validate() const;
  std::vector<double> resolved_weights() const;
};

// 1 when the candidate is at least as long as the reference, else
// exp(1 - reference/candidate).
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

using Tokens = std::vector<std::string>;

// Corpus-level BLEU with pooled clipped precisions; 0 if any precision is 0.
double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, const BleuConfig& cfg = {});
double sentence_bleu(const Tokens& candidate, const Tokens& reference, const BleuConfig& cfg = {});

struct IdfTable {
  std::unordered_map<std::string, double> weights;
  std::size_t documents = 0;

  // Weight of a token never seen in the corpus: -log(1 / (1 + M)).
  double unseen() const;
  double operator()(const std::string& token) const;
};

// Smoothed idf(x) = -log((1 + df(x)) / (1 + M)).
IdfTable idf_weights(const std::vector<Tokens>& corpus);

// Maps tokens to unit-norm vectors, one per token.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const Tokens& tokens) const = 0;
};

struct SimilarityResult {
  double value = 0.0;
  bool uniform_fallback = false;  // all idf weights were zero
};

// sum_r idf(r) max_t <T_t, R_r> / sum_r idf(r) over received tokens r.
SimilarityResult similarity_precision(const std::vector<std::vector<double>>& transmitted,
                                      const std::vector<std::vector<double>>& received,
                                      const std::vector<double>& received_idf);
SimilarityResult similarity_precision(const Tokens& transmitted, const Tokens& received,
                                      const EmbeddingProvider& provider, const IdfTable& idf);

// (P - b) / (1 - b). Throws DomainError for b >= 1.
double rescale_similarity(double p, double b);

// Mean precision over random mismatched sentence pairs, used as the baseline b.
double empirical_baseline(const std::vector<Tokens>& corpus, const EmbeddingProvider& provider, const IdfTable& idf,
                          std::size_t pairs, std::uint64_t seed);

}  // namespace rdsc
