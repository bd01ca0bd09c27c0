#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "commands.hpp"
#include "rdsc/checkpoint.hpp"

using namespace rdsc;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> corpus, out, channel, snr_list, noise_ratio, noise_ratios;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_sentences, epochs, batch, d_model, heads, layers, k_sym, max_test;
  std::optional<double> lr, alpha, beta, epsilon, snr;
  bool adv = false, no_calibrate = false, empirical_b = false, no_svg = false;

  void add_common(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--corpus", corpus, "corpus file, one sentence per line");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--max-sentences", max_sentences, "use at most this many corpus sentences");
    app->add_option("--channel", channel, "awgn | rayleigh | identity");
  }
  void add_model(CLI::App* app) {
    app->add_option("--d-model", d_model);
    app->add_option("--heads", heads);
    app->add_option("--layers", layers, "encoder and decoder layers");
    app->add_option("--k-sym", k_sym, "complex symbols per token");
  }
  void add_train(CLI::App* app) {
    app->add_option("--noise-ratio", noise_ratio, "literal noise ratio in [0, 1]");
    app->add_option("--snr", snr, "training SNR in dB");
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch);
    app->add_option("--lr", lr);
    app->add_option("--alpha", alpha, "weight of the mutual-information term");
    app->add_option("--beta", beta, "weight of the detection loss");
    app->add_flag("--adv", adv, "FGM adversarial training");
    app->add_option("--epsilon", epsilon, "FGM perturbation norm");
    app->add_flag("--no-calibrate", no_calibrate, "disable calibrated attention (P = 0)");
  }
  void add_sweep(CLI::App* app) {
    app->add_option("--snr-list", snr_list, "comma-separated SNRs in dB");
    app->add_option("--noise-ratios", noise_ratios, "comma-separated noise ratios");
    app->add_option("--max-test", max_test, "evaluate at most this many test sentences");
    app->add_flag("--no-svg", no_svg, "skip the SVG plots");
  }

  RunConfig resolve(std::optional<nlohmann::json> base = std::nullopt) const {
    RunConfig c = !config.empty() ? load_run_config(config) : base ? run_config_from_json(*base) : RunConfig{};
    if (corpus) c.corpus = *corpus;
    if (out) c.out = *out;
    if (seed) c.seed = *seed;
    if (max_sentences) c.max_sentences = *max_sentences;
    if (channel) {
      try {
        c.channel.kind = channel_kind_from_string(*channel);
      } catch (const Error& e) {
        throw ConfigError(std::string("channel: ") + e.what());
      }
      c.eval.channels = {c.channel.kind};
    }
    if (d_model) c.model.d_model = *d_model;
    if (heads) c.model.heads = *heads;
    if (layers) c.model.enc_layers = c.model.dec_layers = *layers;
    if (k_sym) c.model.k_sym = *k_sym;
    if (noise_ratio) {
      const auto v = parse_number_list(*noise_ratio, "noise_ratio");
      c.noise.ratio = v.front();
      if (v.size() > 1) c.eval.noise_ratios = v;
    }
    if (snr) c.channel.snr_db = *snr;
    if (epochs) c.train.epochs = *epochs;
    if (batch) c.train.batch = *batch;
    if (lr) c.train.lr = *lr;
    if (alpha) c.train.step.weights.alpha = *alpha;
    if (beta) c.train.step.weights.beta = *beta;
    if (adv) c.train.step.adv.enabled = true;
    if (epsilon) c.train.step.adv.epsilon = *epsilon;
    if (no_calibrate) c.calibrate = false;
    if (snr_list) c.eval.snr_list = parse_number_list(*snr_list, "snr_list");
    if (noise_ratios) c.eval.noise_ratios = parse_number_list(*noise_ratios, "noise_ratios");
    if (max_test) c.eval.max_test = *max_test;
    if (empirical_b) c.eval.empirical_b = true;
    if (no_svg) c.eval.svg = false;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdsc: robust semantic communication simulator"};
  app.require_subcommand(1);

  Overrides corrupt_o, train_o, eval_o, base_o;
  bool resume = false;
  std::string checkpoint;

  auto* corrupt = app.add_subcommand("corrupt", "inject literal noise into a corpus and write JSONL");
  corrupt_o.add_common(corrupt);
  corrupt->add_option("--noise-ratio", corrupt_o.noise_ratio, "literal noise ratio in [0, 1]");

  auto* train = app.add_subcommand("train", "train R-DeepSC, writing checkpoints and a CSV log");
  train_o.add_common(train);
  train_o.add_model(train);
  train_o.add_train(train);
  train->add_flag("--resume", resume, "continue from <out>/last.ckpt");

  auto* eval = app.add_subcommand("eval", "sweep SNR x noise ratio for a checkpoint");
  eval_o.add_common(eval);
  eval_o.add_sweep(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/last.ckpt)");
  eval->add_flag("--empirical-b", eval_o.empirical_b, "estimate the similarity baseline b");
  eval->add_flag("--no-calibrate", eval_o.no_calibrate, "disable calibrated attention at evaluation");

  auto* baseline = app.add_subcommand("baseline", "sweep the Huffman + RS + 64-QAM chain");
  base_o.add_common(baseline);
  base_o.add_sweep(baseline);

  auto* plot = app.add_subcommand("plot", "render metrics CSV files as an SVG line chart");
  std::vector<std::string> inputs;
  std::string plot_out = "plot.svg", metric = "bleu", title = "score vs SNR";
  plot->add_option("inputs", inputs, "metrics CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "SVG output file");
  plot->add_option("--metric", metric, "bleu | sim")->check(CLI::IsMember({"bleu", "sim"}));
  plot->add_option("--title", title);

  CLI11_PARSE(app, argc, argv);

  try {
    if (corrupt->parsed()) {
      rdsc::cli::cmd_corrupt(corrupt_o.resolve(), std::cout);
    } else if (train->parsed()) {
      rdsc::cli::cmd_train(train_o.resolve(), resume, std::cout);
    } else if (eval->parsed()) {
      const RunConfig probe = eval_o.resolve();
      const std::filesystem::path ck = checkpoint.empty() ? probe.out / "last.ckpt" : std::filesystem::path(checkpoint);
      // without --config the run settings come from the checkpoint's echo
      const RunConfig c = eval_o.config.empty() ? eval_o.resolve(load_checkpoint(ck).config) : probe;
      rdsc::cli::cmd_eval(c, ck, std::cout);
    } else if (baseline->parsed()) {
      rdsc::cli::cmd_baseline(base_o.resolve(), std::cout);
    } else if (plot->parsed()) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      rdsc::cli::cmd_plot(paths, plot_out, metric == "bleu" ? PlotMetric::bleu : PlotMetric::sim_score, title);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
