#pragma once

// Complex baseband channel: AWGN and block Rayleigh fading with perfect-CSI
// equalization. SNR is Es/N0 per complex symbol on unit-power frames.

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdsc/errors.hpp"

namespace rdsc {

using cplx = std::complex<double>;

enum class ChannelKind { awgn, rayleigh, identity };

const char* to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& name);

struct ChannelConfig {
  ChannelKind kind = ChannelKind::awgn;
  double snr_db = 12.0;
  std::uint64_t seed = 0;
};

struct FadingRealization {
  cplx h{1.0, 0.0};
};

// Deep-fade threshold on |h| below which equalization is refused.
inline constexpr double kDeepFadeThreshold = 1e-9;

// Total complex noise variance: signal_power / 10^(snr_db / 10).
double snr_to_noise_var(double snr_db, double signal_power = 1.0);

double mean_power(std::span<const cplx> x);

// Y = X + n with n ~ CN(0, noise_var) i.i.d.
std::vector<cplx> apply_awgn(std::span<const cplx> x, double noise_var, std::mt19937_64& rng);

struct RayleighOutput {
  std::vector<cplx> y;
  FadingRealization fading;
};

// Draws one h ~ CN(0, 1) for the whole frame, then Y = h X + n.
RayleighOutput apply_rayleigh(std::span<const cplx> x, double noise_var, std::mt19937_64& rng);
// Same with a caller-supplied coefficient.
RayleighOutput apply_rayleigh(std::span<const cplx> x, double noise_var, std::mt19937_64& rng, cplx h);

// X_hat = conj(h) / |h|^2 * Y. Throws DiagnosticsError on a deep fade.
std::vector<cplx> equalize(std::span<const cplx> y, cplx h);

struct ChannelPass {
  std::vector<cplx> equalized;
  FadingRealization fading;
};

// Applies the configured channel to one frame and equalizes the result.
ChannelPass pass_through_channel(std::span<const cplx> x, ChannelKind kind, double noise_var, std::mt19937_64& rng);

}  // namespace rdsc
