#include <doctest.h>

#include <cmath>
#include <random>

#include "metric_oracles.hpp"
#include "rdsc/metrics.hpp"
#include "rdsc/text.hpp"

using namespace rdsc;

TEST_CASE("clipped n-gram statistics") {
  const Tokens sevens = tokenize("the the the the the the the");
  const Tokens cat = tokenize("the cat is on the mat");
  CHECK(clipped_ngram_stats(sevens, cat, 1) == NgramStats{2, 7});
  CHECK(clipped_ngram_stats(cat, cat, 2) == NgramStats{5, 5});
  CHECK(clipped_ngram_stats(tokenize("a b c"), tokenize("x y z"), 1) == NgramStats{0, 3});
  CHECK(clipped_ngram_stats(tokenize("a b"), cat, 3) == NgramStats{0, 0});
  CHECK_THROWS_AS(clipped_ngram_stats(cat, cat, 0), DomainError);
}

TEST_CASE("brevity penalty") {
  CHECK(brevity_penalty(7, 7) == 1.0);
  CHECK(brevity_penalty(10, 5) == 1.0);
  CHECK(brevity_penalty(5, 10) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(brevity_penalty(5, 10) == doctest::Approx(0.3679).epsilon(1e-4));
  CHECK_THROWS_AS(brevity_penalty(0, 3), DomainError);
}

TEST_CASE("corpus BLEU") {
  const std::vector<Tokens> refs{tokenize("the cat is on the mat"), tokenize("there is a cat on the mat")};
  CHECK(bleu(refs, refs) == 1.0);
  CHECK(bleu({tokenize("x y z w v")}, {tokenize("a b c d e")}) == 0.0);
  CHECK_THROWS_AS(bleu(refs, {refs[0]}), ShapeError);
  CHECK_THROWS_AS(bleu({}, {}), ShapeError);
  CHECK_THROWS_AS(bleu(refs, refs, {.max_n = 2, .weights = {0.3, 0.3}}), ConfigError);

  std::mt19937_64 rng(31);
  std::vector<Tokens> cands, ref;
  for (int i = 0; i < 100; ++i) {
    ref.push_back(rdsc::testing::random_sentence(rng, 4, 16, 12));
    cands.push_back(rdsc::testing::perturb_sentence(ref.back(), rng, 12));
  }
  CHECK(bleu(cands, ref) == rdsc::testing::brute_force_bleu(cands, ref, 4));
  CHECK(bleu(cands, ref, {.max_n = 2}) == rdsc::testing::brute_force_bleu(cands, ref, 2));
  for (int i = 0; i < 100; ++i)
    CHECK(sentence_bleu(cands[i], ref[i]) == rdsc::testing::brute_force_bleu({cands[i]}, {ref[i]}, 4));
}

TEST_CASE("idf weights") {
  std::vector<Tokens> corpus;
  for (int i = 0; i < 9; ++i) corpus.push_back(i < 3 ? Tokens{"all", "rare"} : Tokens{"all", "common"});
  const auto idf = idf_weights(corpus);
  CHECK(idf.documents == 9);
  CHECK(idf("all") == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(idf("never") == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  CHECK(idf("never") == doctest::Approx(2.3026).epsilon(1e-4));
  CHECK(idf("rare") > idf("common"));
  CHECK(idf("never") > idf("rare"));
  CHECK_THROWS_AS(idf_weights({}), ShapeError);
}

TEST_CASE("similarity precision") {
  const std::vector<std::vector<double>> e1{{1, 0}}, e2{{0, 1}};
  CHECK(similarity_precision(e1, e2, {1.0}).value == 0.0);
  CHECK(similarity_precision(e1, e1, {1.0}).value == 1.0);

  // max similarities [0.5, 1.0] with idf [1, 3]
  const double c = 0.5, s = std::sqrt(1 - c * c);
  const std::vector<std::vector<double>> t{{1, 0}, {0, 1}}, r{{c, -s}, {0, 1}};
  CHECK(similarity_precision(t, r, {1.0, 3.0}).value == doctest::Approx(0.875).epsilon(1e-12));

  auto fb = similarity_precision(t, r, {0.0, 0.0});
  CHECK(fb.uniform_fallback);
  CHECK(fb.value == doctest::Approx(0.75).epsilon(1e-12));

  // permuting received tokens with their weights leaves the score unchanged
  const std::vector<std::vector<double>> rp{{0, 1}, {c, -s}};
  CHECK(similarity_precision(t, rp, {3.0, 1.0}).value == doctest::Approx(0.875).epsilon(1e-12));
  CHECK_THROWS_AS(similarity_precision({}, r, {}), ShapeError);
}

TEST_CASE("rescale similarity") {
  CHECK(rescale_similarity(0.7, 0.0) == 0.7);
  for (double b : {-0.5, 0.0, 0.3, 0.9}) CHECK(rescale_similarity(1.0, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rescale_similarity(0.8, 0.5) == doctest::Approx(0.6).epsilon(1e-15));
  const double b = 0.35;
  CHECK(rescale_similarity(0.9, b) - rescale_similarity(0.4, b) == doctest::Approx(0.5 / (1 - b)).epsilon(1e-12));
  CHECK_THROWS_AS(rescale_similarity(0.5, 1.0), DomainError);
}
