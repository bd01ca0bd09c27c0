#include "rdsc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace rdsc {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'D', 'S', 'C'};

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& b) : b_(b) {}
  template <class T>
  T pod(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > b_.size() - pos_) throw CheckpointError(std::string("corrupt checkpoint: truncated ") + what);
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Shape& shape, std::span<const double> values) {
  if (name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + name);
  w.pod(std::uint16_t(name.size()));
  w.raw(name.data(), name.size());
  w.pod(std::uint8_t(shape.size()));
  for (auto d : shape) w.pod(std::uint64_t(d));
  for (double v : values) w.pod(static_cast<float>(v));
}

}  // namespace

json to_json(const EpochLog& e) {
  json j = {{"epoch", e.epoch},
            {"l_ce", e.mean.l_ce},
            {"l_mi", e.mean.l_mi},
            {"l_bce", e.mean.l_bce},
            {"total", e.mean.total},
            {"alpha", e.mean.alpha},
            {"beta", e.mean.beta},
            {"val_bleu", e.val_bleu},
            {"steps", e.steps}};
  if (e.adv_total) j["adv_total"] = *e.adv_total;
  return j;
}

EpochLog epoch_log_from_json(const json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.mean.l_ce = j.at("l_ce").get<double>();
  e.mean.l_mi = j.at("l_mi").get<double>();
  e.mean.l_bce = j.at("l_bce").get<double>();
  e.mean.total = j.at("total").get<double>();
  e.mean.alpha = j.at("alpha").get<double>();
  e.mean.beta = j.at("beta").get<double>();
  e.val_bleu = j.at("val_bleu").get<double>();
  e.steps = j.at("steps").get<std::size_t>();
  if (j.contains("adv_total")) e.adv_total = j.at("adv_total").get<double>();
  return e;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  json meta = {{"config", ck.config}, {"epoch", ck.epoch}, {"rng", {{"seed", ck.seed}, {"next_epoch", ck.epoch}}}};
  json log = json::array();
  for (const auto& e : ck.log) log.push_back(to_json(e));
  meta["log"] = log;
  if (ck.adam)
    meta["adam"] = {{"lr", ck.adam->config.lr},
                    {"beta1", ck.adam->config.beta1},
                    {"beta2", ck.adam->config.beta2},
                    {"eps", ck.adam->config.eps},
                    {"step", ck.adam->step}};
  const std::string text = meta.dump();

  Writer w;
  w.raw(kMagic, 4);
  w.pod(kCheckpointVersion);
  w.pod(std::uint64_t(text.size()));
  w.raw(text.data(), text.size());
  const auto& entries = ck.params.entries();
  const std::size_t n_adam = ck.adam ? 2 * entries.size() : 0;
  w.pod(std::uint32_t(entries.size() + n_adam));
  for (const auto& [name, t] : entries) write_tensor(w, name, t.shape(), t.data());
  if (ck.adam) {
    if (ck.adam->m.size() != entries.size() || ck.adam->v.size() != entries.size())
      throw ShapeError("checkpoint: optimizer state does not match the parameters");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& [name, t] = entries[i];
      write_tensor(w, "adam.m." + name, t.shape(), ck.adam->m[i]);
      write_tensor(w, "adam.v." + name, t.shape(), ck.adam->v[i]);
    }
  }
  return std::move(w.out);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Cursor c(bytes);
  if (std::memcmp(c.take(4, "header"), kMagic, 4) != 0) throw CheckpointError("corrupt checkpoint: bad magic");
  const auto version = c.pod<std::uint32_t>("header");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto meta_len = c.pod<std::uint64_t>("header");
  const auto* meta_bytes = c.take(meta_len, "metadata");
  json meta;
  try {
    meta = json::parse(meta_bytes, meta_bytes + meta_len);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: metadata: ") + e.what());
  }

  Checkpoint ck;
  std::map<std::string, std::vector<double>> moments_m, moments_v;
  const auto count = c.pod<std::uint32_t>("tensor table");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = c.pod<std::uint16_t>("tensor name");
    const auto* np = c.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(np), name_len);
    const auto rank = c.pod<std::uint8_t>("tensor header");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = std::size_t(c.pod<std::uint64_t>("tensor header"));
      if (d != 0 && numel > (std::size_t(1) << 40) / d) throw CheckpointError("corrupt checkpoint: tensor " + name + " too large");
      numel *= d;
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = double(c.pod<float>("tensor payload"));
    if (name.starts_with("adam.m."))
      moments_m[name.substr(7)] = std::move(values);
    else if (name.starts_with("adam.v."))
      moments_v[name.substr(7)] = std::move(values);
    else
      ck.params.add(name, Tensor::from(shape, std::move(values)));
  }
  if (!c.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");

  try {
    ck.config = meta.at("config");
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.seed = meta.at("rng").at("seed").get<std::uint64_t>();
    for (const auto& e : meta.at("log")) ck.log.push_back(epoch_log_from_json(e));
    if (meta.contains("adam")) {
      const auto& a = meta.at("adam");
      AdamState s;
      s.config = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                  a.at("eps").get<double>()};
      s.step = a.at("step").get<std::uint64_t>();
      for (const auto& [name, t] : ck.params.entries()) {
        auto im = moments_m.find(name), iv = moments_v.find(name);
        if (im == moments_m.end() || iv == moments_v.end())
          throw CheckpointError("corrupt checkpoint: missing optimizer moments for " + name);
        s.m.push_back(std::move(im->second));
        s.v.push_back(std::move(iv->second));
      }
      ck.adam = std::move(s);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: metadata: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ck);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  Checkpoint ck = load_checkpoint(path);
  check_params(ck.params, cfg);
  return ck;
}

Checkpoint checkpoint_from_state(const TrainState& state, const json& config, std::uint64_t seed) {
  Checkpoint ck;
  ck.params = state.params.clone();
  if (!state.optimizer.m.empty()) ck.adam = state.optimizer;
  ck.config = config;
  ck.epoch = state.epochs_done;
  ck.seed = seed;
  ck.log = state.log;
  return ck;
}

TrainState state_from_checkpoint(const Checkpoint& ck) {
  TrainState s;
  s.params = ck.params.clone();
  if (ck.adam) s.optimizer = *ck.adam;
  s.epochs_done = ck.epoch;
  s.log = ck.log;
  return s;
}

}  // namespace rdsc
