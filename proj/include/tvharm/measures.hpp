#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tvharm/model.hpp"

namespace tvharm {

/// Mean power of the p-th harmonic over the window, H_p = (1/2N) sum a^2+b^2.
inline double harmonic_power(const FittedModel& fitted, int p) {
  if (p < 1 || p > fitted.amps.harmonics)
    throw std::invalid_argument("harmonic_power: harmonic index out of range");
  const int N = fitted.n_samples();
  const AmpTracks tr = amplitude_tracks(fitted.amps, N);
  return (tr.a.row(p).squaredNorm() + tr.b.row(p - 1).squaredNorm()) / (2.0 * N);
}

inline std::vector<double> harmonic_powers(const FittedModel& fitted) {
  const int N = fitted.n_samples();
  const AmpTracks tr = amplitude_tracks(fitted.amps, N);
  std::vector<double> out(fitted.amps.harmonics);
  for (int p = 1; p <= fitted.amps.harmonics; ++p)
    out[p - 1] = (tr.a.row(p).squaredNorm() + tr.b.row(p - 1).squaredNorm()) / (2.0 * N);
  return out;
}

/// Total harmonic power. The dc term is excluded; it does not carry voice.
inline double harmonic_power_total(const FittedModel& fitted) {
  double ps = 0.0;
  for (double h : harmonic_powers(fitted)) ps += h;
  return ps;
}

struct HnrValue {
  double db = 0.0;
  bool infinite = false; // zero-variance residual (or empty harmonic set)
};

/// Overall harmonics-to-noise ratio in dB: P_s over the biased sample
/// variance of the residual.
inline HnrValue hnr_overall(const FittedModel& fitted) {
  const int N = fitted.n_samples();
  const double mean = fitted.v_hat.mean();
  const double var = (fitted.v_hat.array() - mean).square().sum() / N;
  const double ps = harmonic_power_total(fitted);
  HnrValue out;
  if (var <= 0.0) {
    out.db = std::numeric_limits<double>::infinity();
    out.infinite = true;
    return out;
  }
  out.db = 10.0 * std::log10(ps / var);
  return out;
}

/// Rectangular-window DFT of the residual.
struct ResidualSpectrum {
  int K = 0;
  std::vector<std::complex<double>> bins;
};

inline ResidualSpectrum residual_spectrum(const FittedModel& fitted, int K) {
  const int N = fitted.n_samples();
  if (K < N) throw std::invalid_argument("residual_spectrum: K must be >= N");
  // twiddles indexed by (k*n) mod K keeps angles exact for large k*n
  std::vector<std::complex<double>> tw(K);
  for (int m = 0; m < K; ++m) {
    const double ang = -2.0 * M_PI * m / static_cast<double>(K);
    tw[m] = {std::cos(ang), std::sin(ang)};
  }
  ResidualSpectrum out;
  out.K = K;
  out.bins.resize(K);
  for (int k = 0; k < K; ++k) {
    std::complex<double> acc{0.0, 0.0};
    std::int64_t idx = 0;
    for (int n = 0; n < N; ++n) {
      acc += fitted.v_hat[n] * tw[static_cast<size_t>(idx)];
      idx += k;
      if (idx >= K) idx -= K * (idx / K);
    }
    out.bins[k] = acc;
  }
  return out;
}

/// Average fundamental frequency in Hz; absent for a zero-harmonic model.
inline std::optional<double> mean_f0(const FittedModel& fitted) {
  if (!fitted.voiced) return std::nullopt;
  const int N = fitted.n_samples();
  return fitted.fs / N * f0_track(fitted.phase, N).sum();
}

struct BandHnr {
  double f_start_hz = 0.0;
  double f_end_hz = 0.0;
  double db = 0.0;
  bool no_harmonics = false; // band contains no harmonic: -inf sentinel
  bool truncated = false;    // band clipped at Nyquist
};

/// Frequency-band HNR from the residual DFT. Each positive-frequency bin in
/// the band counts together with its conjugate mirror (dc and Nyquist once),
/// so the real sinusoid powers H_p and the two-sided spectrum stay
/// commensurate and the full band reproduces the overall HNR.
inline BandHnr hnr_band(const FittedModel& fitted, const ResidualSpectrum& spectrum,
                        double f_start_hz, double f_end_hz) {
  const double nyquist = fitted.fs / 2.0;
  if (!(f_start_hz >= 0.0) || !(f_end_hz > f_start_hz))
    throw std::invalid_argument("hnr_band: need 0 <= f_start < f_end");
  BandHnr out;
  out.f_start_hz = f_start_hz;
  out.f_end_hz = f_end_hz;
  if (f_end_hz > nyquist + 1e-9) {
    out.truncated = true;
    f_end_hz = nyquist;
  }

  const auto f0bar = mean_f0(fitted);
  double hsum = 0.0;
  bool any = false;
  if (f0bar && *f0bar > 0.0) {
    const std::vector<double> hp = harmonic_powers(fitted);
    for (int p = 1; p <= fitted.amps.harmonics; ++p) {
      const double f = p * *f0bar;
      if (f >= f_start_hz && f <= f_end_hz && hp[p - 1] > 0.0) {
        hsum += hp[p - 1];
        any = true;
      }
    }
  }

  const int K = spectrum.K;
  double vsum = 0.0;
  bool any_bin = false;
  const int k_half = K / 2;
  for (int k = 0; k <= k_half; ++k) {
    const double f = k * fitted.fs / K;
    if (f < f_start_hz || f > f_end_hz) continue;
    any_bin = true;
    const double w = (k == 0 || 2 * k == K) ? 1.0 : 2.0;
    vsum += w * std::norm(spectrum.bins[k]);
  }
  if (!any_bin) throw std::invalid_argument("hnr_band: band contains no DFT bin");

  if (!any) {
    out.no_harmonics = true;
    out.db = -std::numeric_limits<double>::infinity();
    return out;
  }
  const int N = fitted.n_samples();
  out.db = 10.0 * std::log10(static_cast<double>(N) * K * hsum / vsum);
  return out;
}

/// HNR of the band ((p-0.5) F0bar, (p+0.5) F0bar) around harmonic p.
inline BandHnr per_harmonic_hnr(const FittedModel& fitted, const ResidualSpectrum& spectrum,
                                int p) {
  if (p < 1 || p > fitted.amps.harmonics)
    throw std::invalid_argument("per_harmonic_hnr: harmonic index out of range");
  const auto f0bar = mean_f0(fitted);
  if (!f0bar || !(*f0bar > 0.0)) {
    BandHnr out;
    out.no_harmonics = true;
    out.db = -std::numeric_limits<double>::infinity();
    return out;
  }
  return hnr_band(fitted, spectrum, (p - 0.5) * *f0bar, (p + 0.5) * *f0bar);
}

struct RateStats {
  double f0dot_extreme_hz_s = 0.0; // signed value of largest magnitude
  double f0dot_rms_hz_s = 0.0;
  double psdot_extreme_per_s = 0.0;
  double psdot_rms_per_s = 0.0;
};

/// Window statistics of the instantaneous F0 and harmonic-power rates.
inline RateStats rate_measures(const FittedModel& fitted) {
  const int N = fitted.n_samples();
  const RateTracks rt = rate_tracks(fitted.phase, fitted.amps, N);
  const AmpTracks tr = amplitude_tracks(fitted.amps, N);

  RateStats out;
  double sq = 0.0;
  for (int n = 0; n < N; ++n) {
    const double v = fitted.fs * fitted.fs * rt.f0dot[n];
    if (std::abs(v) > std::abs(out.f0dot_extreme_hz_s)) out.f0dot_extreme_hz_s = v;
    sq += v * v;
  }
  out.f0dot_rms_hz_s = std::sqrt(sq / N);

  sq = 0.0;
  for (int n = 0; n < N; ++n) {
    double ps_dot = 0.0;
    for (int p = 1; p <= fitted.amps.harmonics; ++p)
      ps_dot += tr.a(p, n) * rt.adot(p, n) + tr.b(p - 1, n) * rt.bdot(p - 1, n);
    ps_dot *= fitted.fs;
    if (std::abs(ps_dot) > std::abs(out.psdot_extreme_per_s)) out.psdot_extreme_per_s = ps_dot;
    sq += ps_dot * ps_dot;
  }
  out.psdot_rms_per_s = std::sqrt(sq / N);
  return out;
}

/// Everything derived from one fitted window.
struct MeasureSet {
  double hnr_db = 0.0;
  bool hnr_infinite = false;
  std::vector<BandHnr> hnr_bands;
  std::optional<double> mean_f0_hz;
  double f0dot_extreme_hz_s = 0.0;
  double f0dot_rms_hz_s = 0.0;
  double psdot_extreme_per_s = 0.0;
  double psdot_rms_per_s = 0.0;
  std::vector<double> harmonic_powers;
};

inline MeasureSet compute_measures(const FittedModel& fitted, int per_harmonic_bands = 0,
                                   int dft_size = 0) {
  MeasureSet out;
  const HnrValue h = hnr_overall(fitted);
  out.hnr_db = h.db;
  out.hnr_infinite = h.infinite;
  out.mean_f0_hz = mean_f0(fitted);
  out.harmonic_powers = harmonic_powers(fitted);
  const RateStats rs = rate_measures(fitted);
  out.f0dot_extreme_hz_s = rs.f0dot_extreme_hz_s;
  out.f0dot_rms_hz_s = rs.f0dot_rms_hz_s;
  out.psdot_extreme_per_s = rs.psdot_extreme_per_s;
  out.psdot_rms_per_s = rs.psdot_rms_per_s;
  if (per_harmonic_bands > 0 && fitted.voiced) {
    const int K = dft_size >= fitted.n_samples() ? dft_size : fitted.n_samples();
    const ResidualSpectrum spec = residual_spectrum(fitted, K);
    const int count = std::min(per_harmonic_bands, fitted.amps.harmonics);
    for (int p = 1; p <= count; ++p) out.hnr_bands.push_back(per_harmonic_hnr(fitted, spec, p));
  }
  return out;
}

}  // namespace tvharm
