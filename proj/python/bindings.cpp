#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "commands.hpp"
#include "rdsc/checkpoint.hpp"
#include "rdsc/experiments.hpp"

namespace py = pybind11;
using namespace rdsc;

namespace {

RunConfig config_from_text(const std::string& text) {
  return text.empty() ? RunConfig{} : run_config_from_json(nlohmann::json::parse(text));
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["model_id"] = r.model_id;
  d["channel"] = r.channel;
  d["snr_db"] = r.snr_db;
  d["noise_ratio"] = r.noise_ratio;
  d["bleu"] = r.bleu;
  d["sim_score"] = r.sim_score;
  d["n_sentences"] = r.n_sentences;
  d["seed"] = r.seed;
  return d;
}

py::list report_rows(const MetricsReport& rep) {
  py::list out;
  for (const auto& r : rep.rows) out.append(row_dict(r));
  return out;
}

// A corpus workspace plus an optional trained model.
class Session {
 public:
  explicit Session(const std::string& config_json) : run_(config_from_text(config_json)) {
    run_.validate();
    ws_ = prepare_workspace(run_);
  }

  static Session from_checkpoint(const std::filesystem::path& path) {
    const Checkpoint ck = load_checkpoint(path);
    Session s(ck.config.dump());
    check_params(ck.params, s.ws_.model);
    s.params_ = ck.params;
    s.has_model_ = true;
    return s;
  }

  std::string config_json() const { return to_json(run_).dump(); }
  std::size_t vocab_size() const { return ws_.vocab.size(); }
  std::vector<std::string> train_sentences() const { return ws_.split.train; }
  std::vector<std::string> test_sentences() const { return ws_.split.test; }

  py::dict corrupt(const std::string& sentence, double ratio, std::uint64_t seed) const {
    NoiseSpec spec;
    spec.ratio = ratio;
    spec.kinds = run_.noise.kinds;
    spec.seed = seed;
    const auto s = inject_literal_noise(encode(sentence, ws_.vocab), spec, ws_.vocab, ws_.lexicon);
    py::dict d;
    d["clean"] = decode(s.clean, ws_.vocab);
    d["noisy"] = decode(s.noisy, ws_.vocab);
    d["labels"] = s.labels;
    py::list kinds;
    for (const auto& e : s.edits) kinds.append(to_string(e.kind));
    d["edits"] = kinds;
    return d;
  }

  py::dict transmit(const std::string& sentence, double ratio, const std::string& channel, double snr_db,
                    std::uint64_t seed, bool calibrate) const {
    if (!has_model_) throw ConfigError("transmit: session has no trained model (use Session.load)");
    ChannelConfig ch;
    ch.kind = channel_kind_from_string(channel);
    ch.snr_db = snr_db;
    ch.seed = seed;
    NoiseSpec noise;
    noise.ratio = ratio;
    noise.kinds = run_.noise.kinds;
    noise.seed = seed;
    const auto r = transmit_receive(sentence, params_, ws_.model, ws_.vocab, ws_.lexicon, ch, noise, calibrate);
    py::dict d;
    d["clean"] = decode(r.sample.clean, ws_.vocab);
    d["noisy"] = decode(r.sample.noisy, ws_.vocab);
    d["received"] = r.received;
    d["p"] = r.p;
    d["labels"] = r.sample.labels;
    return d;
  }

 private:
  RunConfig run_;
  Workspace ws_;
  ModelParams params_;
  bool has_model_ = false;
};

}  // namespace

PYBIND11_MODULE(_rdsc, m) {
  m.doc() = "Robust text semantic communication simulator (R-DeepSC)";

  // translators run newest first, so the subclass goes last
  py::register_exception<Error>(m, "RdscError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("tokenize", &tokenize, py::arg("sentence"));
  m.def("normalize", &normalize, py::arg("sentence"));

  m.def(
      "bleu",
      [](const std::vector<Tokens>& c, const std::vector<Tokens>& r, std::size_t max_n) {
        return bleu(c, r, {.max_n = max_n});
      },
      py::arg("candidates"), py::arg("references"), py::arg("max_n") = 4);
  m.def(
      "sentence_bleu",
      [](const Tokens& c, const Tokens& r, std::size_t max_n) { return sentence_bleu(c, r, {.max_n = max_n}); },
      py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4);
  m.def("brevity_penalty", &brevity_penalty, py::arg("candidate_len"), py::arg("reference_len"));
  m.def(
      "idf_weights",
      [](const std::vector<Tokens>& corpus) {
        const auto t = idf_weights(corpus);
        return std::make_pair(t.weights, t.unseen());
      },
      py::arg("corpus"), "Smoothed idf per token, and the weight of an unseen token.");
  m.def("rescale_similarity", &rescale_similarity, py::arg("p"), py::arg("b"));

  m.def("snr_to_noise_var", &snr_to_noise_var, py::arg("snr_db"), py::arg("signal_power") = 1.0);
  m.def(
      "awgn",
      [](const std::vector<cplx>& x, double snr_db, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return apply_awgn(x, snr_to_noise_var(snr_db), rng);
      },
      py::arg("x"), py::arg("snr_db"), py::arg("seed") = 0);
  m.def(
      "rayleigh",
      [](const std::vector<cplx>& x, double snr_db, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto r = apply_rayleigh(x, snr_to_noise_var(snr_db), rng);
        return std::make_pair(r.y, r.fading.h);
      },
      py::arg("x"), py::arg("snr_db"), py::arg("seed") = 0, "Block-faded symbols and the coefficient h.");

  m.def(
      "fgm_perturbation",
      [](const std::vector<double>& grad, double epsilon) {
        const auto p = fgm_perturbation(Tensor::from({grad.size()}, grad), epsilon);
        return std::vector<double>(p.n_a.data().begin(), p.n_a.data().end());
      },
      py::arg("grad"), py::arg("epsilon"));

  py::class_<ReedSolomon>(m, "ReedSolomon")
      .def(py::init([](unsigned m_bits, unsigned n, unsigned k) {
             RsConfig c;
             c.m = m_bits;
             c.n = n;
             c.k = k;
             return ReedSolomon(c);
           }),
           py::arg("m") = 4, py::arg("n") = 15, py::arg("k") = 11)
      .def("encode", [](const ReedSolomon& rs, const std::vector<unsigned>& msg) { return rs.encode(msg); })
      .def("decode", [](const ReedSolomon& rs, const std::vector<unsigned>& word) {
        const auto r = rs.decode(word);
        return py::make_tuple(r.message, r.ok, r.corrected);
      });

  py::class_<HuffmanTable>(m, "HuffmanTable")
      .def_static("from_corpus", &HuffmanTable::from_corpus, py::arg("lines"))
      .def("encode", [](const HuffmanTable& t, const std::string& s) { return t.encode(s); })
      .def("decode", [](const HuffmanTable& t, const Bits& bits) { return py::bytes(t.decode(bits)); });

  py::class_<ClassicalChain>(m, "ClassicalChain")
      .def(py::init([](const std::vector<std::string>& lines, unsigned m_bits, unsigned k) {
             RsConfig c;
             c.m = m_bits;
             c.n = (1u << m_bits) - 1;
             c.k = k;
             std::vector<std::string> norm;
             for (const auto& l : lines) norm.push_back(normalize(l));
             return ClassicalChain(HuffmanTable::from_corpus(norm), c);
           }),
           py::arg("corpus"), py::arg("m") = 4, py::arg("k") = 11)
      .def(
          "transmit",
          [](const ClassicalChain& ch, const std::string& sentence, const std::string& channel, double snr_db,
             std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            const auto r = ch.transmit(sentence, channel_kind_from_string(channel), snr_db, rng);
            py::dict d;
            d["text"] = py::bytes(r.text);
            d["rs_blocks"] = r.rs_blocks;
            d["rs_failures"] = r.rs_failures;
            d["huffman_error"] = r.huffman_error;
            return d;
          },
          py::arg("sentence"), py::arg("channel") = "awgn", py::arg("snr_db") = 12.0, py::arg("seed") = 0);

  py::class_<Session>(m, "Session")
      .def(py::init<const std::string&>(), py::arg("config_json") = "")
      .def_static("load", &Session::from_checkpoint, py::arg("checkpoint"))
      .def_property_readonly("config_json", &Session::config_json)
      .def_property_readonly("vocab_size", &Session::vocab_size)
      .def_property_readonly("train_sentences", &Session::train_sentences)
      .def_property_readonly("test_sentences", &Session::test_sentences)
      .def("corrupt", &Session::corrupt, py::arg("sentence"), py::arg("ratio"), py::arg("seed") = 0)
      .def("transmit", &Session::transmit, py::arg("sentence"), py::arg("noise_ratio") = 0.2,
           py::arg("channel") = "awgn", py::arg("snr_db") = 12.0, py::arg("seed") = 0, py::arg("calibrate") = true);

  m.def(
      "train",
      [](const std::string& config_json, bool resume) {
        std::ostringstream log;
        const auto s = cli::cmd_train(config_from_text(config_json), resume, log);
        py::dict d;
        d["epochs_done"] = s.epochs_done;
        d["best_val_bleu"] = s.best_val_bleu;
        d["best_epoch"] = s.best_epoch;
        d["last_checkpoint"] = s.last_checkpoint.string();
        d["log"] = log.str();
        return d;
      },
      py::arg("config_json"), py::arg("resume") = false);
  m.def(
      "evaluate",
      [](const std::string& config_json, const std::filesystem::path& checkpoint) {
        std::ostringstream log;
        const auto rep = cli::cmd_eval(config_from_text(config_json), checkpoint, log);
        return report_rows(rep);
      },
      py::arg("config_json"), py::arg("checkpoint"));
  m.def(
      "baseline",
      [](const std::string& config_json) {
        std::ostringstream log;
        return report_rows(cli::cmd_baseline(config_from_text(config_json), log));
      },
      py::arg("config_json"));
  m.def(
      "corrupt_corpus",
      [](const std::string& config_json) {
        std::ostringstream log;
        const auto s = cli::cmd_corrupt(config_from_text(config_json), log);
        return py::make_tuple(s.output.string(), s.histogram);
      },
      py::arg("config_json"));
}
