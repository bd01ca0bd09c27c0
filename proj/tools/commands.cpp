#include "commands.hpp"

#include <cstdio>

#include "rdsc/checkpoint.hpp"
#include "rdsc/experiments.hpp"

namespace rdsc::cli {

namespace fs = std::filesystem;

namespace {

std::vector<TokenSequence> encode_all(const std::vector<std::string>& lines, const Vocabulary& vocab) {
  std::vector<TokenSequence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(encode(l, vocab));
  return out;
}

std::vector<TokenSequence> test_set(const RunConfig& c, const Workspace& w) {
  auto test = encode_all(w.split.test, w.vocab);
  if (c.eval.max_test > 0 && test.size() > c.eval.max_test) test.resize(c.eval.max_test);
  if (test.empty()) throw ShapeError("test set: no sentences (corpus too small for test_every)");
  return test;
}

IdfTable training_idf(const Workspace& w) {
  std::vector<Tokens> docs;
  for (const auto& l : w.split.train) docs.push_back(tokenize(l));
  return idf_weights(docs);
}

std::string num(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_report(const RunConfig& c, const MetricsReport& rep, const std::string& stem, const std::string& title) {
  fs::create_directories(c.out);
  write_text_file((c.out / (stem + ".csv")).string(), rep.to_csv());
  if (c.eval.svg) {
    write_text_file((c.out / (stem + "_bleu.svg")).string(), render_svg(rep, PlotMetric::bleu, title + ": BLEU"));
    write_text_file((c.out / (stem + "_sim.svg")).string(),
                    render_svg(rep, PlotMetric::sim_score, title + ": similarity"));
  }
}

}  // namespace

CorruptSummary cmd_corrupt(const RunConfig& c, std::ostream& log) {
  c.validate();
  const Workspace w = prepare_workspace(c);
  const auto clean = encode_all(w.lines, w.vocab);
  const auto samples = corrupt_all(clean, c.noise.ratio, c.noise.kinds, c.seed, w.vocab, w.lexicon);

  CorruptSummary s;
  s.sentences = samples.size();
  for (auto k : c.noise.kinds) s.histogram[to_string(k)] = 0;
  std::string jsonl;
  for (const auto& smp : samples) {
    jsonl += noisy_sample_to_json(smp, w.vocab) + "\n";
    for (const auto& e : smp.edits) {
      ++s.histogram[to_string(e.kind)];
      ++s.edits;
    }
  }
  fs::create_directories(c.out);
  s.output = c.out / "corrupted.jsonl";
  write_text_file(s.output.string(), jsonl);
  log << "corrupted " << s.sentences << " sentences at ratio " << c.noise.ratio << " -> " << s.output.string() << "\n";
  for (const auto& [kind, n] : s.histogram) log << "  " << kind << " " << n << "\n";
  log << "  total " << s.edits << "\n";
  return s;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  const bool adv = !log.empty() && log.front().adv_total.has_value();
  std::string out = "epoch,l_ce,l_mi,l_bce,total,";
  out += adv ? "adv_total,val_bleu\n" : "val_bleu\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + num(e.mean.l_ce) + "," + num(e.mean.l_mi) + "," + num(e.mean.l_bce) + "," +
           num(e.mean.total) + ",";
    if (adv) out += num(e.adv_total.value_or(0.0)) + ",";
    out += num(e.val_bleu) + "\n";
  }
  return out;
}

TrainSummary cmd_train(const RunConfig& c, bool resume, std::ostream& log) {
  c.validate();
  const Workspace w = prepare_workspace(c);
  const TrainConfig tc = c.training();
  const auto corpus = encode_all(w.split.train, w.vocab);
  const auto validation = encode_all(w.split.test, w.vocab);
  fs::create_directories(c.out);
  write_text_file((c.out / "config.json").string(), to_json(c).dump(2) + "\n");

  const fs::path last = c.out / "last.ckpt";
  TrainState state;
  if (resume && fs::exists(last)) {
    state = state_from_checkpoint(load_checkpoint(last, w.model));
    log << "resuming from " << last.string() << " after epoch " << state.epochs_done << "\n";
  } else {
    state = fresh_state(w.model, tc);
  }
  log << "training on " << corpus.size() << " sentences, vocab " << w.vocab.size() << ", "
      << state.params.parameter_count() << " parameters\n";

  const auto echo = to_json(c);
  train(state, w.model, tc, corpus, validation, w.vocab, w.lexicon, [&](const TrainState& s) {
    const auto& e = s.log.back();
    const auto ck = checkpoint_from_state(s, echo, c.seed);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", s.epochs_done);
    save_checkpoint(ck, c.out / name);
    save_checkpoint(ck, last);
    write_text_file((c.out / "train_log.csv").string(), training_log_csv(s.log));
    log << "epoch " << e.epoch << " ce " << num(e.mean.l_ce, "%.4f") << " mi " << num(e.mean.l_mi, "%.4f") << " bce "
        << num(e.mean.l_bce, "%.4f") << " total " << num(e.mean.total, "%.4f");
    if (e.adv_total) log << " adv " << num(*e.adv_total, "%.4f");
    log << " val_bleu " << num(e.val_bleu, "%.4f") << std::endl;
    return true;
  });

  TrainSummary s;
  s.epochs_done = state.epochs_done;
  s.last_checkpoint = last;
  for (const auto& e : state.log)
    if (e.val_bleu > s.best_val_bleu || s.best_epoch == 0) {
      s.best_val_bleu = e.val_bleu;
      s.best_epoch = e.epoch;
    }
  write_text_file((c.out / "train_log.csv").string(), training_log_csv(state.log));
  log << "done: " << s.epochs_done << " epochs, best validation BLEU " << num(s.best_val_bleu, "%.4f") << " at epoch "
      << s.best_epoch << "\n";
  return s;
}

MetricsReport cmd_eval(const RunConfig& c, const fs::path& checkpoint, std::ostream& log) {
  c.validate();
  const Workspace w = prepare_workspace(c);
  const Checkpoint ck = load_checkpoint(checkpoint, w.model);
  const auto test = test_set(c, w);
  const auto idf = training_idf(w);

  SweepConfig sw;
  sw.model_id = c.calibrate ? "rdeepsc" : "rdeepsc_nocal";
  if (c.train.step.adv.enabled) sw.model_id += "_fgm";
  sw.snr_list = c.eval.snr_list;
  sw.noise_ratios = c.eval.noise_ratios;
  sw.kinds = c.noise.kinds;
  sw.calibrate = c.calibrate;
  sw.seed = c.seed;
  sw.similarity_b = c.eval.similarity_b;
  if (c.eval.empirical_b) {
    EncoderEmbeddingProvider provider(ck.params, w.model, w.vocab);
    std::vector<Tokens> docs;
    for (const auto& l : w.split.train) docs.push_back(tokenize(l));
    sw.similarity_b = empirical_baseline(docs, provider, idf, 1000, derive_seed(c.seed, 0xb));
    log << "empirical similarity baseline b = " << num(sw.similarity_b, "%.4f") << "\n";
  }
  MetricsReport rep;
  for (auto kind : c.eval.channels) {
    sw.channel = kind;
    const auto part = evaluate_sweep(ck.params, w.model, test, w.vocab, w.lexicon, idf, sw);
    rep.rows.insert(rep.rows.end(), part.rows.begin(), part.rows.end());
  }
  write_report(c, rep, "metrics", "R-DeepSC");
  for (const auto& r : rep.rows)
    log << r.channel << " snr " << r.snr_db << " ratio " << r.noise_ratio << " bleu " << num(r.bleu, "%.4f") << " sim "
        << num(r.sim_score, "%.4f") << "\n";
  return rep;
}

MetricsReport cmd_baseline(const RunConfig& c, std::ostream& log) {
  c.validate();
  const Workspace w = prepare_workspace(c);
  const auto test = test_set(c, w);
  std::vector<std::string> normalized;
  for (const auto& l : w.split.train) normalized.push_back(normalize(l));
  const ClassicalChain chain(HuffmanTable::from_corpus(normalized), c.rs);

  SweepConfig sw;
  sw.model_id = "classical";
  sw.snr_list = c.eval.snr_list;
  sw.noise_ratios = c.eval.noise_ratios;
  sw.kinds = c.noise.kinds;
  sw.seed = c.seed;
  MetricsReport rep;
  for (auto kind : c.eval.channels) {
    sw.channel = kind;
    const auto part = baseline_sweep(chain, test, w.vocab, w.lexicon, sw);
    rep.rows.insert(rep.rows.end(), part.rows.begin(), part.rows.end());
  }
  write_report(c, rep, "baseline", "Huffman + RS + 64-QAM");
  for (const auto& r : rep.rows)
    log << r.channel << " snr " << r.snr_db << " ratio " << r.noise_ratio << " bleu " << num(r.bleu, "%.4f") << "\n";
  return rep;
}

void cmd_plot(const std::vector<fs::path>& inputs, const fs::path& output, PlotMetric metric,
              const std::string& title) {
  if (inputs.empty()) throw ConfigError("input: at least one CSV file is required");
  MetricsReport merged;
  for (const auto& p : inputs) {
    const auto r = MetricsReport::from_csv(read_text_file(p.string()));
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
  }
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_text_file(output.string(), render_svg(merged, metric, title));
}

}  // namespace rdsc::cli
