#include "rdsc/channel.hpp"

#include <cmath>
#include <sstream>

namespace rdsc {

const char* to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::awgn: return "awgn";
    case ChannelKind::rayleigh: return "rayleigh";
    case ChannelKind::identity: return "identity";
  }
  return "?";
}

ChannelKind channel_kind_from_string(const std::string& name) {
  for (auto k : {ChannelKind::awgn, ChannelKind::rayleigh, ChannelKind::identity})
    if (name == to_string(k)) return k;
  throw ConfigError("channel: unknown channel kind '" + name + "' (expected awgn, rayleigh or identity)");
}

double snr_to_noise_var(double snr_db, double signal_power) {
  if (!(signal_power > 0.0)) {
    std::ostringstream os;
    os << "snr_to_noise_var: signal power must be positive, got " << signal_power;
    throw DomainError(os.str());
  }
  return signal_power / std::pow(10.0, snr_db / 10.0);
}

double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : x) s += std::norm(v);
  return s / static_cast<double>(x.size());
}

std::vector<cplx> apply_awgn(std::span<const cplx> x, double noise_var, std::mt19937_64& rng) {
  if (noise_var < 0.0) throw DomainError("apply_awgn: negative noise variance");
  std::vector<cplx> y(x.begin(), x.end());
  if (noise_var == 0.0) return y;
  std::normal_distribution<double> nd(0.0, std::sqrt(noise_var / 2.0));
  for (auto& v : y) {
    const double re = nd(rng);
    const double im = nd(rng);
    v += cplx(re, im);
  }
  return y;
}

RayleighOutput apply_rayleigh(std::span<const cplx> x, double noise_var, std::mt19937_64& rng, cplx h) {
  std::vector<cplx> hx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) hx[i] = h * x[i];
  return {apply_awgn(hx, noise_var, rng), {h}};
}

RayleighOutput apply_rayleigh(std::span<const cplx> x, double noise_var, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  const double re = nd(rng);
  const double im = nd(rng);
  return apply_rayleigh(x, noise_var, rng, cplx(re, im));
}

std::vector<cplx> equalize(std::span<const cplx> y, cplx h) {
  const double mag = std::abs(h);
  if (mag < kDeepFadeThreshold) {
    std::ostringstream os;
    os << "equalize: deep fade, |h| = " << mag << " below " << kDeepFadeThreshold;
    throw DiagnosticsError(os.str());
  }
  const cplx w = std::conj(h) / (mag * mag);
  std::vector<cplx> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = w * y[i];
  return out;
}

ChannelPass pass_through_channel(std::span<const cplx> x, ChannelKind kind, double noise_var, std::mt19937_64& rng) {
  switch (kind) {
    case ChannelKind::identity: return {std::vector<cplx>(x.begin(), x.end()), {}};
    case ChannelKind::awgn: return {apply_awgn(x, noise_var, rng), {}};
    case ChannelKind::rayleigh: {
      auto r = apply_rayleigh(x, noise_var, rng);
      return {equalize(r.y, r.fading.h), r.fading};
    }
  }
  throw ConfigError("channel: invalid kind");
}

}  // namespace rdsc
