#pragma once

// Brute-force BLEU written without maps: every n-gram is compared against
// every other by direct slice comparison.

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace rdsc::testing {

using Sentence = std::vector<std::string>;

inline bool same_gram(const Sentence& a, std::size_t i, const Sentence& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

inline double brute_force_bleu(const std::vector<Sentence>& cands, const std::vector<Sentence>& refs,
                               std::size_t max_n) {
  std::size_t c_len = 0, r_len = 0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::size_t matched = 0, total = 0;
    for (std::size_t s = 0; s < cands.size(); ++s) {
      const auto& c = cands[s];
      const auto& r = refs[s];
      if (c.size() < n) continue;
      std::vector<bool> counted(c.size(), false);
      for (std::size_t i = 0; i + n <= c.size(); ++i) {
        ++total;
        if (counted[i]) continue;
        std::size_t in_c = 0, in_r = 0;
        for (std::size_t j = i; j + n <= c.size(); ++j)
          if (same_gram(c, i, c, j, n)) {
            ++in_c;
            counted[j] = true;
          }
        for (std::size_t j = 0; j + n <= r.size(); ++j) in_r += same_gram(c, i, r, j, n);
        matched += std::min(in_c, in_r);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(double(matched) / double(total)) / double(max_n);
  }
  for (std::size_t s = 0; s < cands.size(); ++s) {
    c_len += cands[s].size();
    r_len += refs[s].size();
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - double(r_len) / double(c_len));
  return bp * std::exp(log_sum);
}

inline Sentence random_sentence(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len, int alphabet) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> word(0, alphabet - 1);
  Sentence s(len(rng));
  for (auto& w : s) w = "w" + std::to_string(word(rng));
  return s;
}

// Copies a sentence with random substitutions, drops and insertions.
inline Sentence perturb_sentence(const Sentence& s, std::mt19937_64& rng, int alphabet) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> word(0, alphabet - 1);
  Sentence out;
  for (const auto& w : s) {
    const double r = u(rng);
    if (r < 0.15) continue;
    out.push_back(r < 0.35 ? "w" + std::to_string(word(rng)) : w);
    if (u(rng) < 0.1) out.push_back("w" + std::to_string(word(rng)));
  }
  if (out.empty()) out.push_back(s.front());
  return out;
}

}  // namespace rdsc::testing
