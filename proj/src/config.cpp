#include "rdsc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rdsc {

using nlohmann::json;

namespace {

const char* attack_name(AttackLoss a) { return a == AttackLoss::ce ? "ce" : "total"; }

AttackLoss attack_from(const std::string& s) {
  if (s == "ce") return AttackLoss::ce;
  if (s == "total") return AttackLoss::total;
  throw ConfigError("train.attack_loss: expected \"ce\" or \"total\", got \"" + s + "\"");
}

// Reads fields of one JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown field");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }
  void path(const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& sub(const std::string& key) const { return j_.at(key); }
  std::string where(const std::string& key) const {
    if (key.empty()) return prefix_.empty() ? "config" : prefix_;
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <class E, class F>
std::vector<E> enum_list(const std::vector<std::string>& names, const std::string& field, F from) {
  std::vector<E> out;
  for (const auto& n : names) {
    try {
      out.push_back(from(n));
    } catch (const Error& e) {
      throw ConfigError(field + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

TrainConfig RunConfig::training() const {
  TrainConfig t = train;
  t.noise_ratio = noise.ratio;
  t.noise_kinds = noise.kinds;
  t.seed = seed;
  t.step.forward.channel = channel.kind;
  t.step.forward.snr_db = channel.snr_db;
  t.step.forward.calibrate = calibrate;
  return t;
}

void RunConfig::validate(bool check_paths) const {
  if (check_paths) {
    if (!std::filesystem::exists(corpus)) throw ConfigError("corpus: file not found: " + corpus.string());
    if (!verbs.empty() && !std::filesystem::exists(verbs))
      throw ConfigError("verbs: file not found: " + verbs.string());
  }
  if (vocab_cap <= kNumReserved) throw ConfigError("vocab_cap: must exceed the reserved tokens");
  if (min_freq == 0) throw ConfigError("min_freq: must be >= 1");
  if (test_every < 2) throw ConfigError("test_every: must be >= 2");
  ModelConfig m = model;
  m.vocab = vocab_cap;
  m.validate();
  noise.validate();
  try {
    training().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train.") + e.what());
  }
  if (!std::isfinite(channel.snr_db)) throw ConfigError("channel.snr_db: must be finite");
  if (eval.snr_list.empty()) throw ConfigError("eval.snr_list: must not be empty");
  for (double s : eval.snr_list)
    if (!std::isfinite(s)) throw ConfigError("eval.snr_list: values must be finite");
  if (eval.noise_ratios.empty()) throw ConfigError("eval.noise_ratios: must not be empty");
  for (double r : eval.noise_ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("eval.noise_ratios: values must lie in [0, 1]");
  if (eval.channels.empty()) throw ConfigError("eval.channels: must not be empty");
  if (!(eval.similarity_b < 1.0)) throw ConfigError("eval.similarity_b: must be < 1");
  rs.validate();
}

json to_json(const RunConfig& c) {
  json j;
  j["corpus"] = c.corpus.string();
  j["verbs"] = c.verbs.string();
  j["max_sentences"] = c.max_sentences;
  j["vocab_cap"] = c.vocab_cap;
  j["min_freq"] = c.min_freq;
  j["test_every"] = c.test_every;
  j["model"] = {{"d_model", c.model.d_model}, {"heads", c.model.heads},     {"enc_layers", c.model.enc_layers},
                {"dec_layers", c.model.dec_layers}, {"ffn", c.model.ffn}, {"k_sym", c.model.k_sym},
                {"max_len", c.model.max_len}, {"d_det", c.model.d_det},   {"d_mi", c.model.d_mi}};
  std::vector<std::string> kinds;
  for (auto k : c.noise.kinds) kinds.emplace_back(to_string(k));
  j["noise"] = {{"ratio", c.noise.ratio}, {"kinds", kinds}};
  j["channel"] = {{"kind", to_string(c.channel.kind)}, {"snr_db", c.channel.snr_db}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch", t.batch},
                {"lr", t.lr},
                {"alpha", t.step.weights.alpha},
                {"beta", t.step.weights.beta},
                {"adv", t.step.adv.enabled},
                {"epsilon", t.step.adv.epsilon},
                {"attack_loss", attack_name(t.step.adv.loss_choice)},
                {"val_sentences", t.val_sentences}};
  j["calibrate"] = c.calibrate;
  std::vector<std::string> chans;
  for (auto k : c.eval.channels) chans.emplace_back(to_string(k));
  j["eval"] = {{"snr_list", c.eval.snr_list},       {"noise_ratios", c.eval.noise_ratios},
               {"channels", chans},                 {"max_test", c.eval.max_test},
               {"similarity_b", c.eval.similarity_b}, {"empirical_b", c.eval.empirical_b},
               {"svg", c.eval.svg}};
  j["rs"] = {{"m", c.rs.m}, {"k", c.rs.k}};
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.path("corpus", c.corpus);
  r.path("verbs", c.verbs);
  r.get("max_sentences", c.max_sentences);
  r.get("vocab_cap", c.vocab_cap);
  r.get("min_freq", c.min_freq);
  r.get("test_every", c.test_every);
  if (r.has("model")) {
    Reader m(r.sub("model"), "model");
    m.get("d_model", c.model.d_model);
    m.get("heads", c.model.heads);
    m.get("enc_layers", c.model.enc_layers);
    m.get("dec_layers", c.model.dec_layers);
    m.get("ffn", c.model.ffn);
    m.get("k_sym", c.model.k_sym);
    m.get("max_len", c.model.max_len);
    m.get("d_det", c.model.d_det);
    m.get("d_mi", c.model.d_mi);
  }
  if (r.has("noise")) {
    Reader n(r.sub("noise"), "noise");
    n.get("ratio", c.noise.ratio);
    if (n.has("kinds")) {
      std::vector<std::string> names;
      n.get("kinds", names);
      c.noise.kinds = enum_list<NoiseKind>(names, "noise.kinds", noise_kind_from_string);
    }
  }
  if (r.has("channel")) {
    Reader ch(r.sub("channel"), "channel");
    if (ch.has("kind")) {
      std::string kind;
      ch.get("kind", kind);
      c.channel.kind = enum_list<ChannelKind>({kind}, "channel.kind", channel_kind_from_string)[0];
    }
    ch.get("snr_db", c.channel.snr_db);
  }
  if (r.has("train")) {
    Reader t(r.sub("train"), "train");
    t.get("epochs", c.train.epochs);
    t.get("batch", c.train.batch);
    t.get("lr", c.train.lr);
    t.get("alpha", c.train.step.weights.alpha);
    t.get("beta", c.train.step.weights.beta);
    t.get("adv", c.train.step.adv.enabled);
    t.get("epsilon", c.train.step.adv.epsilon);
    if (t.has("attack_loss")) {
      std::string a;
      t.get("attack_loss", a);
      c.train.step.adv.loss_choice = attack_from(a);
    }
    t.get("val_sentences", c.train.val_sentences);
  }
  r.get("calibrate", c.calibrate);
  if (r.has("eval")) {
    Reader e(r.sub("eval"), "eval");
    e.get("snr_list", c.eval.snr_list);
    e.get("noise_ratios", c.eval.noise_ratios);
    if (e.has("channels")) {
      std::vector<std::string> names;
      e.get("channels", names);
      c.eval.channels = enum_list<ChannelKind>(names, "eval.channels", channel_kind_from_string);
    }
    e.get("max_test", c.eval.max_test);
    e.get("similarity_b", c.eval.similarity_b);
    e.get("empirical_b", c.eval.empirical_b);
    e.get("svg", c.eval.svg);
  }
  if (r.has("rs")) {
    Reader s(r.sub("rs"), "rs");
    s.get("m", c.rs.m);
    s.get("k", c.rs.k);
    if (c.rs.m < 3 || c.rs.m > 8) throw ConfigError("rs.m: must lie in [3, 8]");
    c.rs.n = (1u << c.rs.m) - 1;
  }
  r.get("seed", c.seed);
  r.path("out", c.out);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

CorpusSplit split_corpus(const std::vector<std::string>& lines, std::size_t test_every) {
  if (test_every < 2) throw ConfigError("test_every: must be >= 2");
  CorpusSplit s;
  for (std::size_t i = 0; i < lines.size(); ++i) (i % test_every == test_every - 1 ? s.test : s.train).push_back(lines[i]);
  return s;
}

Workspace prepare_workspace(const RunConfig& c) {
  Workspace w;
  w.lines = load_corpus(c.corpus, c.max_sentences);
  if (w.lines.empty()) throw ShapeError("corpus: no usable sentences in " + c.corpus.string());
  w.split = split_corpus(w.lines, c.test_every);
  w.vocab = build_vocab(w.lines, c.min_freq, c.vocab_cap);
  w.lexicon = c.verbs.empty() ? VerbLexicon::bundled() : VerbLexicon::load(c.verbs);
  w.model = c.model;
  w.model.vocab = w.vocab.size();
  w.model.validate();
  return w;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw ConfigError(field + ": not a number: \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(field + ": empty list");
  return out;
}

}  // namespace rdsc
