#pragma once

// Run configuration: one JSON document, command-line flags applied on top.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsc/channel.hpp"
#include "rdsc/classical.hpp"
#include "rdsc/text.hpp"
#include "rdsc/training.hpp"

namespace rdsc {

struct EvalSettings {
  std::vector<double> snr_list{0, 3, 6, 9, 12, 15, 18};
  std::vector<double> noise_ratios{0.0, 0.2};
  std::vector<ChannelKind> channels{ChannelKind::awgn, ChannelKind::rayleigh};
  std::size_t max_test = 0;  // 0 = whole test split
  double similarity_b = 0.0;
  bool empirical_b = false;
  bool svg = true;
};

struct RunConfig {
  std::filesystem::path corpus = std::filesystem::path(RDSC_DATA_DIR) / "desk_corpus.txt";
  std::filesystem::path verbs;  // empty = bundled lexicon
  std::size_t max_sentences = 0;
  std::size_t vocab_cap = 4000;
  std::size_t min_freq = 1;
  std::size_t test_every = 10;  // every n-th sentence goes to the test split

  ModelConfig model;  // vocab is filled from the corpus
  NoiseSpec noise{.ratio = 0.2};
  ChannelConfig channel;
  TrainConfig train;
  bool calibrate = true;
  EvalSettings eval;
  RsConfig rs;

  std::uint64_t seed = 1;
  std::filesystem::path out = "runs/default";

  // Training settings with the shared noise, channel, seed and calibration
  // fields applied.
  TrainConfig training() const;

  // Range checks; with `check_paths` the corpus and lexicon must exist.
  void validate(bool check_paths = true) const;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys and wrong types raise
// ConfigError naming the field.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct CorpusSplit {
  std::vector<std::string> train, test;
};

CorpusSplit split_corpus(const std::vector<std::string>& lines, std::size_t test_every);

// Corpus, vocabulary and lexicon resolved from a RunConfig.
struct Workspace {
  std::vector<std::string> lines;
  CorpusSplit split;
  Vocabulary vocab;
  VerbLexicon lexicon;
  ModelConfig model;  // with vocab set
};

Workspace prepare_workspace(const RunConfig& c);

std::vector<double> parse_number_list(const std::string& text, const std::string& field);

}  // namespace rdsc
