#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgjmap/error.hpp"
#include "sgjmap/noise_vad.hpp"
#include "sgjmap/stft.hpp"

namespace sgjmap {

constexpr double kSnrFloor = 1e-6;

/// Parameter ranges exposed to users.
struct ParamRange {
  double lo;
  double hi;
  constexpr double clamp(double v) const { return std::clamp(v, lo, hi); }
  constexpr bool contains(double v) const { return v >= lo && v <= hi; }
};

constexpr ParamRange kBetaRange{0.1, 5.0};
constexpr ParamRange kMuRange{0.5, 3.0};
constexpr ParamRange kNuRange{0.01, 1.0};

/// Tradeoff and prior-shape parameters of the gain rules, always in range.
class GainParams {
 public:
  static constexpr double kDefaultBeta = 1.0;
  static constexpr double kDefaultMu = 1.74;
  static constexpr double kDefaultNu = 0.126;
  static constexpr double kDefaultFloor = 0.1;
  static constexpr double kDefaultCap = 10.0;

  GainParams() = default;
  GainParams(double beta, double mu, double nu, double gain_floor = kDefaultFloor,
             double gain_cap = kDefaultCap)
      : beta_(kBetaRange.clamp(beta)),
        mu_(kMuRange.clamp(mu)),
        nu_(kNuRange.clamp(nu)),
        gain_floor_(std::clamp(gain_floor, 0.0, std::nextafter(1.0, 0.0))),
        gain_cap_(std::max(gain_cap, 1.0)) {}

  double beta() const noexcept { return beta_; }
  double mu() const noexcept { return mu_; }
  double nu() const noexcept { return nu_; }
  double gain_floor() const noexcept { return gain_floor_; }
  double gain_cap() const noexcept { return gain_cap_; }

  GainParams with_beta(double beta) const {
    return {beta, mu_, nu_, gain_floor_, gain_cap_};
  }
  GainParams with_shape(double mu, double nu) const {
    return {beta_, mu, nu, gain_floor_, gain_cap_};
  }

  friend bool operator==(const GainParams&, const GainParams&) = default;

 private:
  double beta_ = kDefaultBeta;
  double mu_ = kDefaultMu;
  double nu_ = kDefaultNu;
  double gain_floor_ = kDefaultFloor;
  double gain_cap_ = kDefaultCap;
};

enum class NoisePreset { Babble, Machinery, Traffic };

struct ShapePreset {
  double mu;
  double nu;
};

/// Noise-dependent prior shapes used for babble, machinery and traffic.
constexpr ShapePreset shape_preset(NoisePreset preset) {
  switch (preset) {
    case NoisePreset::Babble: return {2.5, 1.0};
    case NoisePreset::Machinery: return {2.0, 0.9};
    case NoisePreset::Traffic: return {1.75, 0.75};
  }
  return {GainParams::kDefaultMu, GainParams::kDefaultNu};
}

inline std::optional<NoisePreset> parse_preset(std::string_view name) {
  if (name == "babble") return NoisePreset::Babble;
  if (name == "machinery") return NoisePreset::Machinery;
  if (name == "traffic") return NoisePreset::Traffic;
  return std::nullopt;
}

enum class GainRule { Proposed, Sgjmap, Jmap, Bypass };

constexpr std::string_view to_string(GainRule rule) noexcept {
  switch (rule) {
    case GainRule::Proposed: return "proposed";
    case GainRule::Sgjmap: return "sgjmap";
    case GainRule::Jmap: return "jmap";
    case GainRule::Bypass: return "bypass";
  }
  return "unknown";
}

inline std::optional<GainRule> parse_rule(std::string_view name) {
  for (auto r : {GainRule::Proposed, GainRule::Sgjmap, GainRule::Jmap, GainRule::Bypass}) {
    if (name == to_string(r)) return r;
  }
  return std::nullopt;
}

// Scalar gain laws. These return the unbounded value; callers apply the
// floor and cap.

/// Positive root of g^2 - 2*b*g - q = 0, i.e. b + sqrt(b^2 + q), evaluated
/// without cancellation when b < 0.
inline double positive_root(double b, double q) {
  const double s = std::sqrt(b * b + q);
  return b >= 0.0 ? b + s : q / (s - b);
}

/// Super-Gaussian JMAP amplitude gain:
/// u + sqrt(u^2 + nu/(2 gamma)), u = 1/2 - mu/(4 sqrt(gamma xi)).
inline double sgjmap_gain_raw(double xi, double gamma, double mu, double nu) {
  const double c = mu / (4.0 * std::sqrt(gamma * xi));
  return positive_root(0.5 - c, nu / (2.0 * gamma));
}

/// Tradeoff-weighted super-Gaussian JMAP gain. With t = 1/(2 beta):
/// (t - c) + sqrt((c - t)^2 + nu/(2 gamma beta^2)). Reduces to
/// sgjmap_gain_raw at beta = 1 and tends to 1/beta at high SNR.
inline double proposed_gain_raw(double xi, double gamma, double beta, double mu, double nu) {
  const double c = mu / (4.0 * std::sqrt(gamma * xi));
  const double t = 1.0 / (2.0 * beta);
  return positive_root(t - c, nu / (2.0 * gamma * (beta * beta)));
}

/// Gaussian-prior joint MAP amplitude gain.
inline double jmap_gain_raw(double xi, double gamma) {
  return (xi + std::sqrt(xi * xi + (1.0 + xi) * xi / gamma)) / (2.0 * (1.0 + xi));
}

struct GainVector {
  std::vector<double> g;

  std::size_t size() const noexcept { return g.size(); }
  double operator[](std::size_t k) const { return g[k]; }
};

namespace detail {
inline double bound_gain(double g, double floor, double cap) {
  if (!std::isfinite(g)) return std::isnan(g) ? floor : cap;
  return std::clamp(g, floor, cap);
}

template <class Law>
GainVector map_gain(std::span<const double> xi, std::span<const double> gamma,
                    double floor, double cap, Law law) {
  if (xi.size() != gamma.size()) fail(Errc::ConfigMismatch, "xi/gamma length differ");
  GainVector out;
  out.g.resize(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) {
    out.g[k] = bound_gain(law(xi[k], gamma[k]), floor, cap);
  }
  return out;
}
}  // namespace detail

inline GainVector sgjmap_gain(std::span<const double> xi, std::span<const double> gamma,
                              double mu, double nu,
                              double floor = GainParams::kDefaultFloor,
                              double cap = GainParams::kDefaultCap) {
  return detail::map_gain(xi, gamma, floor, cap, [&](double x, double g) {
    return sgjmap_gain_raw(x, g, mu, nu);
  });
}

inline GainVector proposed_gain(std::span<const double> xi, std::span<const double> gamma,
                                const GainParams& p) {
  return detail::map_gain(xi, gamma, p.gain_floor(), p.gain_cap(), [&](double x, double g) {
    return proposed_gain_raw(x, g, p.beta(), p.mu(), p.nu());
  });
}

inline GainVector jmap_gain(std::span<const double> xi, std::span<const double> gamma,
                            double floor = GainParams::kDefaultFloor,
                            double cap = GainParams::kDefaultCap) {
  return detail::map_gain(xi, gamma, floor, cap,
                          [](double x, double g) { return jmap_gain_raw(x, g); });
}

/// gamma_k = |Y_k|^2 / psd_k, floored.
inline std::vector<double> posterior_snr(const SpectralFrame& frame, const NoiseEstimate& noise) {
  detail::require_initialized(noise, frame.size());
  std::vector<double> gamma(frame.size());
  for (std::size_t k = 0; k < frame.size(); ++k) {
    gamma[k] = std::max(frame.power(k) / noise.psd[k], kSnrFloor);
  }
  return gamma;
}

struct SnrState {
  std::vector<double> xi;
  std::vector<double> gamma;
  std::vector<double> prev_amp;  // enhanced amplitude of the previous frame
  double alpha_dd = 0.98;
};

/// Decision-directed a priori SNR:
/// alpha * A_prev^2 / psd + (1 - alpha) * max(gamma - 1, 0), floored.
inline std::vector<double> decision_directed_xi(const SnrState& state,
                                                const NoiseEstimate& noise,
                                                std::span<const double> gamma) {
  detail::require_initialized(noise, gamma.size());
  const bool first = state.prev_amp.empty();
  if (!first && state.prev_amp.size() != gamma.size()) {
    detail::fail(Errc::ConfigMismatch, "prev_amp/gamma length differ");
  }
  const double a = state.alpha_dd;
  std::vector<double> xi(gamma.size());
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    const double prev = first ? 0.0 : state.prev_amp[k] * state.prev_amp[k] / noise.psd[k];
    xi[k] = std::max(a * prev + (1.0 - a) * std::max(gamma[k] - 1.0, 0.0), kSnrFloor);
  }
  return xi;
}

/// Scales each complex bin by a real gain; the noisy phase is kept.
inline SpectralFrame apply_gain(const SpectralFrame& frame, const GainVector& gain) {
  if (gain.size() != frame.size()) {
    detail::fail(Errc::ConfigMismatch, "gain/frame bin count differ");
  }
  SpectralFrame out = frame;
  for (std::size_t k = 0; k < out.size(); ++k) out.bins[k] *= gain.g[k];
  return out;
}

}  // namespace sgjmap
