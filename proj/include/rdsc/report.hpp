#pragma once

// Metrics CSV and a small SVG line-chart emitter.

#include <cstdint>
#include <string>
#include <vector>

#include "rdsc/errors.hpp"

namespace rdsc {

struct MetricsRow {
  std::string model_id;
  std::string channel;
  double snr_db = 0.0;
  double noise_ratio = 0.0;
  double bleu = 0.0;
  double sim_score = 0.0;
  std::size_t n_sentences = 0;
  std::uint64_t seed = 0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  static constexpr const char* kHeader = "model_id,channel,snr_db,noise_ratio,bleu,sim_score,n_sentences,seed";

  // Fixed formatting: numbers with %.6f (snr, ratio with %g), one row per line.
  std::string to_csv() const;
  // Accepts only the documented header; throws ShapeError naming the line.
  static MetricsReport from_csv(const std::string& text);
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

enum class PlotMetric { bleu, sim_score };

// One series per (model_id, channel, noise_ratio), score against SNR. Each
// series carries a data-series attribute "<model_id>/<channel>/<ratio>".
std::string render_svg(const MetricsReport& report, PlotMetric metric, const std::string& title);

std::string series_key(const MetricsRow& row);

}  // namespace rdsc
