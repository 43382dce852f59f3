#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tvharm/basis.hpp"

namespace tvharm {

/// Orders, bounds and stopping tolerances of one harmonic-model fit.
///
/// Frequencies are normalized (cycles/sample). `f0_max` defaults to the
/// largest value keeping all harmonics below Nyquist, 0.5/P.
struct ModelConfig {
  int harmonics = 1;    // P, order of the highest modeled harmonic
  int phase_degree = 1; // L_phi >= 1
  int amp_degree = 0;   // L >= 0

  double f0_min = 0.0;
  double f0_max = 0.0; // <= 0 means "use 0.5/harmonics"
  std::optional<double> f0dot_max;   // cycles/sample^2
  std::optional<double> amp_rate_max; // 1/sample, checked after the solve
  std::optional<std::vector<int>> rate_harmonics; // subset of {0..P}

  double rho = 1e-10; // squared-norm stop tolerance on phase-parameter change
  int max_iters = 50;

  static ModelConfig make(int harmonics, int phase_degree, int amp_degree) {
    ModelConfig c;
    c.harmonics = harmonics;
    c.phase_degree = phase_degree;
    c.amp_degree = amp_degree;
    c.f0_max = 0.5 / harmonics;
    return c;
  }

  double f0_upper() const {
    return f0_max > 0.0 ? f0_max : 0.5 / static_cast<double>(harmonics);
  }

  int amp_param_count() const { return (2 * harmonics + 1) * (amp_degree + 1); }

  void validate() const {
    if (harmonics < 1) throw std::invalid_argument("ModelConfig: harmonics must be >= 1");
    if (phase_degree < 1) throw std::invalid_argument("ModelConfig: phase_degree must be >= 1");
    if (amp_degree < 0) throw std::invalid_argument("ModelConfig: amp_degree must be >= 0");
    if (!(rho > 0.0)) throw std::invalid_argument("ModelConfig: rho must be positive");
    if (max_iters < 1) throw std::invalid_argument("ModelConfig: max_iters must be >= 1");
    const double hi = f0_upper();
    if (!(f0_min >= 0.0) || !(f0_min < hi))
      throw std::invalid_argument("ModelConfig: need 0 <= f0_min < f0_max");
    if (hi > 0.5 / static_cast<double>(harmonics) + 1e-15)
      throw std::invalid_argument("ModelConfig: f0_max puts harmonics above Nyquist");
    if (rate_harmonics) {
      for (int p : *rate_harmonics)
        if (p < 0 || p > harmonics)
          throw std::invalid_argument("ModelConfig: rate_harmonics index out of range");
    }
  }
};

/// Common-phase polynomial coefficients [phi_{0,1} .. phi_{0,L_phi}].
struct PhaseParams {
  Eigen::VectorXd phi;

  int degree() const { return static_cast<int>(phi.size()); }
};

/// Amplitude polynomial coefficients.
///
/// Stored as L+1 contiguous blocks of length 2P+1, block ell holding
/// [a_{0,ell}, a_{1,ell} .. a_{P,ell}, b_{1,ell} .. b_{P,ell}].
struct AmplitudeParams {
  Eigen::VectorXd coeffs;
  int harmonics = 0; // P
  int degree = 0;    // L

  int block_size() const { return 2 * harmonics + 1; }

  double a(int p, int ell) const { return coeffs[ell * block_size() + p]; }
  double b(int p, int ell) const { return coeffs[ell * block_size() + harmonics + p]; }

  static AmplitudeParams zeros(int harmonics, int degree) {
    AmplitudeParams out;
    out.harmonics = harmonics;
    out.degree = degree;
    out.coeffs = Eigen::VectorXd::Zero((2 * harmonics + 1) * (degree + 1));
    return out;
  }
};

/// One analysis window of a sampled signal.
struct WindowedFrame {
  Eigen::VectorXd samples;
  double fs = 1.0;       // samples/second
  double t_center = 0.0; // absolute time of the window center, seconds
};

/// Result of fitting the harmonic model to one window.
struct FittedModel {
  ModelConfig config;
  PhaseParams phase;
  AmplitudeParams amps;
  Eigen::VectorXd s_hat; // harmonic component
  Eigen::VectorXd v_hat; // residual, x - s_hat
  double fs = 1.0;
  double t_center = 0.0;
  int iters = 0;
  bool converged = false;
  bool voiced = true;           // false when the input had no periodic component
  bool rank_deficient = false;  // any amplitude solve hit a singular design
  bool amp_rate_exceeded = false; // amp_rate_max feasibility check failed
  std::vector<double> cost_trace; // cost after every amplitude and phase step

  int n_samples() const { return static_cast<int>(s_hat.size()); }
};

/// Model parameters rescaled to continuous time (per-second units).
struct ContinuousParams {
  Eigen::VectorXd phase_derivs; // Phi_0^{(ell)}(t0), ell = 1..L_phi, rad/s^ell
  Eigen::VectorXd amp_derivs;   // AmplitudeParams layout, units/s^ell
  double f0_hz = 0.0;
  double f0dot_hz_s = 0.0;
};

inline Eigen::VectorXd common_phase_track(const PhaseParams& phase, int n_samples) {
  Eigen::VectorXd track = Eigen::VectorXd::Zero(n_samples);
  for (int ell = 1; ell <= phase.degree(); ++ell)
    track += phase.phi[ell - 1] * basis_column(ell, n_samples);
  return track;
}

/// Normalized instantaneous fundamental frequency, cycles/sample.
inline Eigen::VectorXd f0_track(const PhaseParams& phase, int n_samples) {
  Eigen::VectorXd track = Eigen::VectorXd::Zero(n_samples);
  const double scale = 1.0 / (2.0 * M_PI);
  for (int ell = 1; ell <= phase.degree(); ++ell)
    track += scale * phase.phi[ell - 1] * basis_column(ell - 1, n_samples);
  return track;
}

struct AmpTracks {
  Eigen::MatrixXd a; // (P+1) x N, row p = a_{p,n}
  Eigen::MatrixXd b; // P x N, row p-1 = b_{p,n}
};

inline AmpTracks amplitude_tracks(const AmplitudeParams& amps, int n_samples) {
  const int P = amps.harmonics;
  AmpTracks out;
  out.a = Eigen::MatrixXd::Zero(P + 1, n_samples);
  out.b = Eigen::MatrixXd::Zero(P, n_samples);
  for (int ell = 0; ell <= amps.degree; ++ell) {
    const Eigen::VectorXd h = basis_column(ell, n_samples);
    for (int p = 0; p <= P; ++p) out.a.row(p) += amps.a(p, ell) * h.transpose();
    for (int p = 1; p <= P; ++p) out.b.row(p - 1) += amps.b(p, ell) * h.transpose();
  }
  return out;
}

struct RateTracks {
  Eigen::VectorXd f0dot; // cycles/sample^2
  Eigen::MatrixXd adot;  // (P+1) x N
  Eigen::MatrixXd bdot;  // P x N
};

/// Analytic time derivatives of the f0 and amplitude tracks.
inline RateTracks rate_tracks(const PhaseParams& phase, const AmplitudeParams& amps,
                              int n_samples) {
  RateTracks out;
  out.f0dot = Eigen::VectorXd::Zero(n_samples);
  const double scale = 1.0 / (2.0 * M_PI);
  for (int ell = 2; ell <= phase.degree(); ++ell)
    out.f0dot += scale * phase.phi[ell - 1] * basis_column(ell - 2, n_samples);

  const int P = amps.harmonics;
  out.adot = Eigen::MatrixXd::Zero(P + 1, n_samples);
  out.bdot = Eigen::MatrixXd::Zero(P, n_samples);
  for (int ell = 1; ell <= amps.degree; ++ell) {
    const Eigen::VectorXd h = basis_column(ell - 1, n_samples);
    for (int p = 0; p <= P; ++p) out.adot.row(p) += amps.a(p, ell) * h.transpose();
    for (int p = 1; p <= P; ++p) out.bdot.row(p - 1) += amps.b(p, ell) * h.transpose();
  }
  return out;
}

/// Harmonic waveform s_n = a_{0,n}/2 + sum_p a_{p,n} cos(p phi_n) + b_{p,n} sin(p phi_n).
inline Eigen::VectorXd synthesize(const PhaseParams& phase, const AmplitudeParams& amps,
                                  int n_samples) {
  const int P = amps.harmonics;
  const Eigen::VectorXd phi = common_phase_track(phase, n_samples);
  const AmpTracks tr = amplitude_tracks(amps, n_samples);
  Eigen::VectorXd s(n_samples);
  for (int n = 0; n < n_samples; ++n) {
    const double c1 = std::cos(phi[n]);
    const double s1 = std::sin(phi[n]);
    double cp = 1.0, sp = 0.0; // cos/sin of p*phi, advanced by angle addition
    double acc = 0.5 * tr.a(0, n);
    for (int p = 1; p <= P; ++p) {
      const double cnext = cp * c1 - sp * s1;
      const double snext = sp * c1 + cp * s1;
      cp = cnext;
      sp = snext;
      acc += tr.a(p, n) * cp + tr.b(p - 1, n) * sp;
    }
    s[n] = acc;
  }
  return s;
}

/// Discrete-time coefficients scaled to per-second units by F_s^ell.
inline ContinuousParams to_continuous(const FittedModel& fitted) {
  ContinuousParams out;
  const int lphi = fitted.phase.degree();
  out.phase_derivs.resize(lphi);
  double fpow = fitted.fs;
  for (int ell = 1; ell <= lphi; ++ell) {
    out.phase_derivs[ell - 1] = fitted.phase.phi[ell - 1] * fpow;
    fpow *= fitted.fs;
  }
  out.amp_derivs = fitted.amps.coeffs;
  const int block = fitted.amps.block_size();
  fpow = 1.0;
  for (int ell = 0; ell <= fitted.amps.degree; ++ell) {
    out.amp_derivs.segment(ell * block, block) *= fpow;
    fpow *= fitted.fs;
  }
  out.f0_hz = out.phase_derivs[0] / (2.0 * M_PI);
  out.f0dot_hz_s = lphi >= 2 ? out.phase_derivs[1] / (2.0 * M_PI) : 0.0;
  return out;
}

struct MagPhase {
  double magnitude;
  double phase; // radians
};

/// Per-harmonic magnitude/phase (A_p, Phi_p) at sample n, p = 1..P.
inline std::vector<MagPhase> mag_phase(const AmplitudeParams& amps, int n, int n_samples) {
  if (n < 0 || n >= n_samples) throw std::invalid_argument("mag_phase: sample out of range");
  const AmpTracks tr = amplitude_tracks(amps, n_samples);
  std::vector<MagPhase> out;
  out.reserve(amps.harmonics);
  for (int p = 1; p <= amps.harmonics; ++p) {
    const double a = tr.a(p, n);
    const double b = tr.b(p - 1, n);
    out.push_back({std::hypot(a, b), std::atan2(b, a)});
  }
  return out;
}

}  // namespace tvharm
