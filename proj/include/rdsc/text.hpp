#pragma once

// Corpus ingestion, vocabulary, tokenization and word-level noise injection.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "rdsc/errors.hpp"

namespace rdsc {

// Reserved token indices.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kStart = 1;
inline constexpr std::size_t kEnd = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kMask = 4;
inline constexpr std::size_t kNumReserved = 5;

// Lowercases, splits on whitespace and detaches punctuation into separate
// tokens. Apostrophes and hyphens inside a word stay attached.
std::vector<std::string> tokenize(const std::string& sentence);
// Tokens joined by single spaces.
std::string normalize(const std::string& sentence);

class Vocabulary {
 public:
  // Only the reserved tokens.
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  std::size_t index_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::size_t index) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Appends a token if absent and returns its index.
  std::size_t add(const std::string& token);

  static bool is_reserved(std::size_t index) { return index < kNumReserved; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens with frequency >= min_freq, most frequent first (ties broken
// lexicographically), truncated so that the vocabulary including the reserved
// tokens holds at most `cap` entries.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq, std::size_t cap);

struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<std::string> surface;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

TokenSequence encode(const std::string& sentence, const Vocabulary& vocab);
std::string decode(const TokenSequence& seq, const Vocabulary& vocab);
std::string decode_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab);
TokenSequence sequence_from_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab);
// Dense one-hot rows (test and inspection helper).
std::vector<std::vector<double>> one_hot(const TokenSequence& seq, std::size_t vocab_size);

// Inflection alternatives for verb errors.
class VerbLexicon {
 public:
  VerbLexicon() = default;

  // One inflection group per line; '#' starts a comment.
  static VerbLexicon load(const std::filesystem::path& path);
  static VerbLexicon from_groups(const std::vector<std::vector<std::string>>& groups);
  // The lexicon shipped in data/verbs.txt.
  static VerbLexicon bundled();

  bool contains(const std::string& form) const { return alternatives_.count(form) != 0; }
  // Lexicon alternatives when the form is listed; otherwise suffix-toggle
  // guesses (-s, -ed, -ing stripped or appended). Never contains `form`.
  std::vector<std::string> alternatives(const std::string& form) const;
  const std::map<std::string, std::set<std::string>>& entries() const { return alternatives_; }

 private:
  std::map<std::string, std::set<std::string>> alternatives_;
};

enum class NoiseKind { replacement, mask, insertion, verb };

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

struct NoiseSpec {
  double ratio = 0.0;
  std::vector<NoiseKind> kinds{NoiseKind::replacement, NoiseKind::mask, NoiseKind::insertion, NoiseKind::verb};
  std::uint64_t seed = 0;

  void validate() const;
};

struct NoiseEdit {
  NoiseKind kind;          // kind actually applied (verb may fall back to replacement)
  std::size_t clean_pos;   // position in the clean sequence
  std::size_t noisy_pos;   // position of the corrupted or inserted token
  std::size_t original;    // clean token id (the token the insertion follows, for insertions)
  std::size_t replacement; // token id written at noisy_pos
};

struct NoisySample {
  TokenSequence clean;
  TokenSequence noisy;
  std::vector<int> labels;  // 1 at corrupted or inserted positions of `noisy`
  std::vector<NoiseEdit> edits;
  std::uint64_t seed = 0;
};

// Number of edits for a sequence of `length` tokens: ceil(ratio * length).
std::size_t noise_edit_count(double ratio, std::size_t length);

NoisySample inject_literal_noise(const TokenSequence& clean, const NoiseSpec& spec, const Vocabulary& vocab,
                                 const VerbLexicon& verbs);

// Mixes a base seed with an index (splitmix64), for per-sentence streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Lines of a UTF-8 text file whose token counts lie in [min_len, max_len], in
// file order, at most max_sentences of them (0 = unlimited).
std::vector<std::string> load_corpus(const std::filesystem::path& path, std::size_t max_sentences = 0,
                                     std::size_t min_len = 4, std::size_t max_len = 30);

// One JSON object per line: {"clean", "noisy", "labels", "seed"}.
std::string noisy_sample_to_json(const NoisySample& s, const Vocabulary& vocab);

}  // namespace rdsc
