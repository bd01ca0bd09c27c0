#pragma once

// Implementations behind the rdsc subcommands. Each writes its artifacts
// under the configured output directory and returns a short summary.

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rdsc/config.hpp"
#include "rdsc/report.hpp"

namespace rdsc::cli {

struct CorruptSummary {
  std::filesystem::path output;
  std::size_t sentences = 0;
  std::map<std::string, std::size_t> histogram;  // edit kind -> count
  std::size_t edits = 0;
};

CorruptSummary cmd_corrupt(const RunConfig& c, std::ostream& log);

struct TrainSummary {
  std::size_t epochs_done = 0;
  double best_val_bleu = 0.0;
  std::size_t best_epoch = 0;
  std::filesystem::path last_checkpoint;
};

// With `resume`, continues from <out>/last.ckpt when it exists.
TrainSummary cmd_train(const RunConfig& c, bool resume, std::ostream& log);

MetricsReport cmd_eval(const RunConfig& c, const std::filesystem::path& checkpoint, std::ostream& log);

MetricsReport cmd_baseline(const RunConfig& c, std::ostream& log);

// Merges the CSV inputs into one chart.
void cmd_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& output,
              PlotMetric metric, const std::string& title);

// CSV training log of a run (epoch, losses, optional adversarial column, validation BLEU).
std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace rdsc::cli
