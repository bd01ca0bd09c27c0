#include "rdsc/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace rdsc {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

const std::vector<std::string> kReservedTokens{"<pad>", "<start>", "<end>", "<unk>", "<mask>"};

}  // namespace

std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(sentence[i]);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if ((c == '\'' || c == '-') && !cur.empty() && i + 1 < sentence.size() &&
               is_word_char(static_cast<unsigned char>(sentence[i + 1]))) {
      cur.push_back(static_cast<char>(c));
    } else if (c == '<') {
      // reserved markers such as <unk> survive tokenization intact
      const auto close = sentence.find('>', i);
      if (close != std::string::npos) {
        const std::string tag = sentence.substr(i, close - i + 1);
        if (std::find(kReservedTokens.begin(), kReservedTokens.end(), tag) != kReservedTokens.end()) {
          flush();
          out.push_back(tag);
          i = close;
          continue;
        }
      }
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string normalize(const std::string& sentence) {
  const auto toks = tokenize(sentence);
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const auto& t : kReservedTokens) add(t);
}

std::size_t Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t index) const {
  if (index >= tokens_.size()) throw IndexError("vocabulary index " + std::to_string(index) + " out of range");
  return tokens_[index];
}

std::size_t Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const std::size_t id = tokens_.size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq, std::size_t cap) {
  if (corpus.empty()) throw ConfigError("build_vocab: corpus is empty");
  if (cap < kNumReserved) throw ConfigError("build_vocab: cap must be at least " + std::to_string(kNumReserved));
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& line : corpus)
    for (auto& t : tokenize(line)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_freq && std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) == kReservedTokens.end())
      ranked.emplace_back(tok, n);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= cap) break;
    v.add(tok);
  }
  return v;
}

TokenSequence encode(const std::string& sentence, const Vocabulary& vocab) {
  TokenSequence s;
  s.surface = tokenize(sentence);
  s.ids.reserve(s.surface.size());
  for (const auto& t : s.surface) s.ids.push_back(vocab.index_of(t));
  return s;
}

std::string decode_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

std::string decode(const TokenSequence& seq, const Vocabulary& vocab) { return decode_ids(seq.ids, vocab); }

TokenSequence sequence_from_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  TokenSequence s;
  s.ids = ids;
  for (auto id : ids) s.surface.push_back(vocab.token(id));
  return s;
}

std::vector<std::vector<double>> one_hot(const TokenSequence& seq, std::size_t vocab_size) {
  std::vector<std::vector<double>> rows(seq.size(), std::vector<double>(vocab_size, 0.0));
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.ids[i] >= vocab_size) throw IndexError("one_hot: index out of range");
    rows[i][seq.ids[i]] = 1.0;
  }
  return rows;
}

// ---------------------------------------------------------------------------

VerbLexicon VerbLexicon::from_groups(const std::vector<std::vector<std::string>>& groups) {
  VerbLexicon lex;
  for (const auto& g : groups)
    for (const auto& a : g)
      for (const auto& b : g)
        if (a != b) lex.alternatives_[a].insert(b);
  return lex;
}

VerbLexicon VerbLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read verb lexicon " + path.string());
  std::vector<std::vector<std::string>> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    std::vector<std::string> g;
    for (std::string w; ss >> w;) g.push_back(w);
    if (g.size() > 1) groups.push_back(std::move(g));
  }
  return from_groups(groups);
}

VerbLexicon VerbLexicon::bundled() { return load(std::filesystem::path(RDSC_DATA_DIR) / "verbs.txt"); }

std::vector<std::string> VerbLexicon::alternatives(const std::string& form) const {
  if (auto it = alternatives_.find(form); it != alternatives_.end())
    return std::vector<std::string>(it->second.begin(), it->second.end());
  auto ends_with = [&](const std::string& suf) {
    return form.size() > suf.size() + 2 && form.compare(form.size() - suf.size(), suf.size(), suf) == 0;
  };
  std::string stem = form;
  if (ends_with("ing"))
    stem = form.substr(0, form.size() - 3);
  else if (ends_with("ed"))
    stem = form.substr(0, form.size() - 2);
  else if (ends_with("s") && !ends_with("ss"))
    stem = form.substr(0, form.size() - 1);
  std::set<std::string> alts{stem, stem + "s", stem + "ed", stem + "ing"};
  alts.erase(form);
  return std::vector<std::string>(alts.begin(), alts.end());
}

// ---------------------------------------------------------------------------

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::replacement: return "replacement";
    case NoiseKind::mask: return "mask";
    case NoiseKind::insertion: return "insertion";
    case NoiseKind::verb: return "verb";
  }
  return "?";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  for (auto k : {NoiseKind::replacement, NoiseKind::mask, NoiseKind::insertion, NoiseKind::verb})
    if (name == to_string(k)) return k;
  throw ConfigError("noise.kinds: unknown noise kind '" + name + "'");
}

void NoiseSpec::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise.ratio: must lie in [0, 1]");
  if (ratio > 0.0 && kinds.empty()) throw ConfigError("noise.kinds: at least one kind required when ratio > 0");
}

std::size_t noise_edit_count(double ratio, std::size_t length) {
  if (ratio <= 0.0) return 0;
  // tolerance keeps products like 0.6 * 5 from rounding up past the exact count
  const double k = std::ceil(ratio * static_cast<double>(length) - 1e-9);
  return std::min(length, static_cast<std::size_t>(std::max(0.0, k)));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NoisySample inject_literal_noise(const TokenSequence& clean, const NoiseSpec& spec, const Vocabulary& vocab,
                                 const VerbLexicon& verbs) {
  spec.validate();
  if (clean.size() == 0) throw ConfigError("inject_literal_noise: clean sequence is empty");
  NoisySample out;
  out.clean = clean;
  out.seed = spec.seed;

  const std::size_t k = noise_edit_count(spec.ratio, clean.size());
  if (k > 0 && vocab.size() < kNumReserved + 2)
    throw ConfigError("inject_literal_noise: vocabulary needs at least two regular tokens");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> positions(clean.size());
  std::iota(positions.begin(), positions.end(), 0);
  std::vector<std::size_t> chosen;
  std::sample(positions.begin(), positions.end(), std::back_inserter(chosen), k, rng);

  std::vector<int> edit_at(clean.size(), -1);
  std::vector<NoiseKind> kinds(clean.size());
  std::uniform_int_distribution<std::size_t> pick_kind(0, spec.kinds.empty() ? 0 : spec.kinds.size() - 1);
  for (std::size_t p : chosen) {
    edit_at[p] = 1;
    kinds[p] = spec.kinds[pick_kind(rng)];
  }

  std::uniform_int_distribution<std::size_t> pick_token(kNumReserved, vocab.size() - 1);
  auto random_token_except = [&](std::size_t avoid) {
    std::size_t t;
    do t = pick_token(rng);
    while (t == avoid);
    return t;
  };

  auto emit = [&](std::size_t id, const std::string& surf, int label) {
    out.noisy.ids.push_back(id);
    out.noisy.surface.push_back(surf);
    out.labels.push_back(label);
  };

  for (std::size_t i = 0; i < clean.size(); ++i) {
    const std::size_t orig = clean.ids[i];
    const std::string& surf = clean.surface.size() == clean.size() ? clean.surface[i] : vocab.token(orig);
    if (edit_at[i] < 0) {
      emit(orig, surf, 0);
      continue;
    }
    NoiseKind kind = kinds[i];
    std::size_t repl = orig;
    if (kind == NoiseKind::verb) {
      std::vector<std::size_t> options;
      for (const auto& alt : verbs.alternatives(surf)) {
        const std::size_t id = vocab.index_of(alt);
        if (!Vocabulary::is_reserved(id) && id != orig) options.push_back(id);
      }
      if (options.empty()) {
        kind = NoiseKind::replacement;
      } else {
        repl = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
      }
    }
    switch (kind) {
      case NoiseKind::replacement: repl = random_token_except(orig); break;
      case NoiseKind::mask: repl = kMask; break;
      case NoiseKind::insertion: repl = pick_token(rng); break;
      case NoiseKind::verb: break;
    }
    if (kind == NoiseKind::insertion) {
      emit(orig, surf, 0);
      out.edits.push_back({kind, i, out.noisy.size(), orig, repl});
      emit(repl, vocab.token(repl), 1);
    } else {
      out.edits.push_back({kind, i, out.noisy.size(), orig, repl});
      emit(repl, vocab.token(repl), 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> load_corpus(const std::filesystem::path& path, std::size_t max_sentences,
                                     std::size_t min_len, std::size_t max_len) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t n = tokenize(line).size();
    if (n == 0 || n < min_len || n > max_len) continue;
    out.push_back(line);
    if (max_sentences && out.size() >= max_sentences) break;
  }
  if (out.empty()) throw ConfigError("corpus: no sentences left after length filtering in " + path.string());
  return out;
}

std::string noisy_sample_to_json(const NoisySample& s, const Vocabulary& vocab) {
  auto join = [&](const TokenSequence& t) {
    std::string r;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) r.push_back(' ');
      r += t.surface.size() == t.size() ? t.surface[i] : vocab.token(t.ids[i]);
    }
    return r;
  };
  nlohmann::ordered_json j;
  j["clean"] = join(s.clean);
  j["noisy"] = join(s.noisy);
  j["labels"] = s.labels;
  j["seed"] = s.seed;
  return j.dump();
}

}  // namespace rdsc
