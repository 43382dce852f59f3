#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tvharm/measures.hpp"
#include "tvharm/model.hpp"

namespace tvharm {

/// All-pole model A(z) = 1 + a_1 z^-1 + ... + a_order z^-order driven by
/// white noise of standard deviation `gain`.
struct ArModel {
  int order = 0;
  Eigen::VectorXd coeffs; // a_1 .. a_order
  double gain = 1.0;
  bool saturated = false; // a reflection coefficient hit the unit circle
};

/// Burg's lattice recursion. Reflection coefficients stay inside (-1, 1),
/// which keeps every estimated model minimum phase.
inline ArModel burg_ar(const Eigen::VectorXd& residual, int order) {
  const int N = static_cast<int>(residual.size());
  if (order < 1) throw std::invalid_argument("burg_ar: order must be >= 1");
  if (N <= 2 * order) throw std::invalid_argument("burg_ar: need more than 2*order samples");
  if (residual.cwiseAbs().maxCoeff() <= 0.0)
    throw std::invalid_argument("burg_ar: all-zero input");

  Eigen::VectorXd f = residual;
  Eigen::VectorXd b = residual;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(order + 1);
  a[0] = 1.0;
  double energy = residual.squaredNorm() / N;

  ArModel out;
  out.order = order;
  out.coeffs = Eigen::VectorXd::Zero(order);

  for (int m = 1; m <= order; ++m) {
    const int len = N - m;
    const auto fm = f.segment(m, len);
    const auto bm = b.segment(m - 1, len);
    const double den = fm.squaredNorm() + bm.squaredNorm();
    if (!(den > 0.0)) {
      out.saturated = true;
      break;
    }
    double k = -2.0 * fm.dot(bm) / den;
    if (!std::isfinite(k) || std::abs(k) >= 1.0 - 1e-12) {
      out.saturated = true;
      k = std::clamp(k, -(1.0 - 1e-9), 1.0 - 1e-9);
      if (!std::isfinite(k)) break;
    }
    Eigen::VectorXd a_next = a;
    for (int i = 1; i <= m; ++i) a_next[i] = a[i] + k * a[m - i];
    a = a_next;
    const Eigen::VectorXd f_new = fm + k * bm;
    const Eigen::VectorXd b_new = bm + k * fm;
    f.segment(m, len) = f_new;
    b.segment(m, len) = b_new;
    energy *= 1.0 - k * k;
    if (out.saturated) break;
  }

  out.coeffs = a.segment(1, order);
  out.gain = std::sqrt(std::max(energy, 0.0));
  return out;
}

/// Filter magnitude response 20 log10 |gain / A(e^{j 2 pi f / fs})| in dB.
inline double ar_gain_db(const ArModel& model, double f_hz, double fs) {
  if (f_hz < 0.0 || f_hz > fs / 2.0)
    throw std::invalid_argument("ar_gain_db: frequency outside [0, fs/2]");
  const double w = 2.0 * M_PI * f_hz / fs;
  std::complex<double> az{1.0, 0.0};
  const std::complex<double> z_inv{std::cos(w), -std::sin(w)};
  std::complex<double> zp = z_inv;
  for (int i = 0; i < model.order; ++i) {
    az += model.coeffs[i] * zp;
    zp *= z_inv;
  }
  return 20.0 * std::log10(model.gain / std::abs(az));
}

struct HarmonicLevel {
  double freq_hz = 0.0;
  double raw_db = 0.0;
  double adjusted_db = 0.0;
  bool usable = true; // above the relative power floor
};

/// Harmonic powers with the vocal-tract filter effect removed, plus the
/// source spectral tilt.
struct SourceSpectrum {
  std::vector<HarmonicLevel> harmonics;
  // Least-squares slope of adjusted power (dB) against harmonic number; at
  // the fundamental one harmonic interval spans one octave.
  std::optional<double> tilt_db_per_octave;
};

/// Subtracts the filter's dB response at each harmonic frequency from the
/// fitted harmonic powers and fits the tilt line through the usable ones.
inline SourceSpectrum adjust_harmonic_powers(const FittedModel& fitted,
                                             const MeasureSet& measures,
                                             const ArModel& model) {
  SourceSpectrum out;
  if (!measures.mean_f0_hz || !(*measures.mean_f0_hz > 0.0)) return out;
  const double f0 = *measures.mean_f0_hz;
  const double nyquist = fitted.fs / 2.0;

  double hmax = 0.0;
  for (double h : measures.harmonic_powers) hmax = std::max(hmax, h);
  const double floor_power = hmax * 1e-6; // -60 dB relative floor

  for (int p = 1; p <= static_cast<int>(measures.harmonic_powers.size()); ++p) {
    const double f = p * f0;
    if (f > nyquist) break;
    const double hp = measures.harmonic_powers[p - 1];
    HarmonicLevel lvl;
    lvl.freq_hz = f;
    lvl.usable = hp > floor_power && hp > 0.0;
    lvl.raw_db = hp > 0.0 ? 10.0 * std::log10(hp) : -std::numeric_limits<double>::infinity();
    lvl.adjusted_db = lvl.raw_db - ar_gain_db(model, f, fitted.fs);
    out.harmonics.push_back(lvl);
  }

  int count = 0;
  double sx = 0.0, sy = 0.0;
  for (size_t i = 0; i < out.harmonics.size(); ++i) {
    if (!out.harmonics[i].usable) continue;
    ++count;
    sx += static_cast<double>(i + 1);
    sy += out.harmonics[i].adjusted_db;
  }
  if (count < 3) return out;
  const double mx = sx / count, my = sy / count;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < out.harmonics.size(); ++i) {
    if (!out.harmonics[i].usable) continue;
    const double dx = static_cast<double>(i + 1) - mx;
    sxx += dx * dx;
    sxy += dx * (out.harmonics[i].adjusted_db - my);
  }
  if (sxx > 0.0) out.tilt_db_per_octave = sxy / sxx;
  return out;
}

}  // namespace tvharm
