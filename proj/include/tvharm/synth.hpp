#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tvharm/estimator.hpp"
#include "tvharm/measures.hpp"
#include "tvharm/model.hpp"
#include "tvharm/rng.hpp"

namespace tvharm {

/// Generative description of a synthetic benchmark signal: harmonics with
/// magnitudes A_p = 2^(1-p) / alpha (alpha normalizes total harmonic power
/// to one), random phases, optional linear frequency modulation, and white
/// Gaussian noise.
struct SynthSpec {
  double fs = 5000.0;
  int n_samples = 250;
  double f0_norm = 0.03;     // cycles/sample at the window center
  double f0dot_norm = 0.0;   // cycles/sample^2
  int harmonics = 16;
  std::uint64_t phase_seed = 1;
  double noise_var = 0.01;
  std::uint64_t noise_seed = 2;
};

/// Normalizer alpha with sum_p A_p^2 / 2 = 1, A_p = 2^(1-p)/alpha.
inline double amplitude_norm(int harmonics) {
  return std::sqrt(2.0 / 3.0 * (1.0 - std::pow(4.0, -harmonics)));
}

inline double synth_f0_extreme(const SynthSpec& spec) {
  return spec.f0_norm + std::abs(spec.f0dot_norm) * center_offset(spec.n_samples);
}

inline Eigen::VectorXd synth_signal(const SynthSpec& spec) {
  const double half = center_offset(spec.n_samples);
  const double f_hi = spec.f0_norm + std::abs(spec.f0dot_norm) * half;
  const double f_lo = spec.f0_norm - std::abs(spec.f0dot_norm) * half;
  if (!(f_lo > 0.0)) throw std::invalid_argument("synth_signal: f0 not positive everywhere");
  if (!(spec.harmonics * f_hi < 0.5))
    throw std::invalid_argument("synth_signal: harmonics cross Nyquist");
  if (spec.noise_var < 0.0) throw std::invalid_argument("synth_signal: negative noise variance");

  const int P = spec.harmonics;
  const double alpha = amplitude_norm(P);
  AmplitudeParams amps = AmplitudeParams::zeros(P, 0);
  SplitMix64 prng(spec.phase_seed);
  for (int p = 1; p <= P; ++p) {
    const double A = std::pow(2.0, 1 - p) / alpha;
    const double phi_p = prng.uniform(0.0, 2.0 * M_PI);
    amps.coeffs[p] = A * std::cos(phi_p);
    amps.coeffs[P + p] = A * std::sin(phi_p);
  }
  PhaseParams phase;
  phase.phi.resize(2);
  phase.phi << 2.0 * M_PI * spec.f0_norm, 2.0 * M_PI * spec.f0dot_norm;

  Eigen::VectorXd x = synthesize(phase, amps, spec.n_samples);
  if (spec.noise_var > 0.0) {
    SplitMix64 nrng(spec.noise_seed);
    const double sigma = std::sqrt(spec.noise_var);
    for (int n = 0; n < spec.n_samples; ++n) x[n] += sigma * nrng.normal();
  }
  return x;
}

enum class SweepKind { f0dot, window, f0, hnr };

inline std::string sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::f0dot: return "f0dot";
    case SweepKind::window: return "window";
    case SweepKind::f0: return "f0";
    case SweepKind::hnr: return "hnr";
  }
  return "?";
}

/// Model orders HM_{L_phi, L} evaluated in a sweep.
struct SweepModel {
  int phase_degree = 2;
  int amp_degree = 0;

  std::string label() const {
    return "HM" + std::to_string(phase_degree) + "," + std::to_string(amp_degree);
  }
};

struct SweepOptions {
  double fs = 5000.0;
  double base_f0_hz = 150.0;
  double base_window_s = 0.05;
  double base_f0dot_hz_s = 0.0; // used by the window/f0/hnr kinds
  double base_hnr_db = 20.0;
  std::vector<double> axis; // empty selects the per-kind default
  int threads = 0;          // 0 means hardware concurrency
  double rho = 1e-10;
  int max_iters = 50;
};

struct SweepRealization {
  double hnr_db = 0.0;
  int iters = 0;
  bool converged = false;
  bool monotone = false; // cost trace non-increasing at 1e-12 relative slack
  bool ok = false;       // fit completed
};

struct SweepResult {
  SweepKind kind = SweepKind::f0dot;
  std::vector<double> axis;
  std::vector<SweepModel> models;
  int realizations = 0;
  std::uint64_t seed = 0;
  // values[model][axis point][realization]
  std::vector<std::vector<std::vector<SweepRealization>>> values;

  double mean_db(int model, int point) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : values[model][point])
      if (r.ok) {
        s += r.hnr_db;
        ++n;
      }
    return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
  }

  double std_db(int model, int point) const {
    const double m = mean_db(model, point);
    double s = 0.0;
    int n = 0;
    for (const auto& r : values[model][point])
      if (r.ok) {
        s += (r.hnr_db - m) * (r.hnr_db - m);
        ++n;
      }
    return n > 1 ? std::sqrt(s / (n - 1)) : 0.0;
  }

  int ok_count(int model, int point) const {
    int n = 0;
    for (const auto& r : values[model][point]) n += r.ok;
    return n;
  }
};

namespace detail {

inline std::vector<double> default_axis(SweepKind kind) {
  switch (kind) {
    case SweepKind::f0dot: return {1.0, 10.0, 100.0, 500.0};    // Hz/s
    case SweepKind::window: return {0.02, 0.05, 0.10, 0.25};    // seconds
    case SweepKind::f0: return {75.0, 100.0, 150.0, 200.0, 300.0}; // Hz
    case SweepKind::hnr: return {10.0, 15.0, 20.0, 25.0, 30.0}; // dB
  }
  return {};
}

/// Largest harmonic count filling the spectrum below Nyquist over the whole
/// signal, clamped for identifiability at the given orders.
inline int fill_spectrum_count(double f0_extreme, int n_samples, int max_amp_degree,
                               int max_phase_degree) {
  int P = static_cast<int>(std::floor(0.5 / f0_extreme));
  while (P > 1 && P * f0_extreme >= 0.5) --P;
  while (P > 1 &&
         (2 * P + 1) * (max_amp_degree + 1) + max_phase_degree > n_samples)
    --P;
  return std::max(P, 1);
}

inline bool trace_monotone(const std::vector<double>& trace) {
  for (size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + 1e-12 * trace[i - 1]) return false;
  return true;
}

}  // namespace detail

/// Monte Carlo accuracy sweep: for every axis point and model order, fits
/// realizations of the synthetic signal (initialized with the known F0) and
/// records the estimated overall HNR. Realizations are keyed tasks with
/// derived seeds, so the thread count never changes the result.
inline SweepResult run_sweep(SweepKind kind, const std::vector<SweepModel>& models,
                             int realizations, std::uint64_t seed,
                             const SweepOptions& opts = {}) {
  if (realizations < 1) throw std::invalid_argument("run_sweep: realizations must be >= 1");
  if (models.empty()) throw std::invalid_argument("run_sweep: no model orders given");

  SweepResult result;
  result.kind = kind;
  result.models = models;
  result.realizations = realizations;
  result.seed = seed;
  result.axis = opts.axis.empty() ? detail::default_axis(kind) : opts.axis;

  const int npoints = static_cast<int>(result.axis.size());
  result.values.assign(models.size(),
                       std::vector<std::vector<SweepRealization>>(
                           npoints, std::vector<SweepRealization>(realizations)));

  int max_l = 0, max_lphi = 0;
  for (const auto& m : models) {
    max_l = std::max(max_l, m.amp_degree);
    max_lphi = std::max(max_lphi, m.phase_degree);
  }

  // per-point signal geometry
  struct Point {
    SynthSpec spec;
    int fit_harmonics = 1;
  };
  std::vector<Point> points(npoints);
  for (int ai = 0; ai < npoints; ++ai) {
    SynthSpec spec;
    spec.fs = opts.fs;
    spec.n_samples = static_cast<int>(std::lround(opts.base_window_s * opts.fs));
    spec.f0_norm = opts.base_f0_hz / opts.fs;
    spec.f0dot_norm = opts.base_f0dot_hz_s / (opts.fs * opts.fs);
    spec.noise_var = std::pow(10.0, -opts.base_hnr_db / 10.0);
    const double v = result.axis[ai];
    switch (kind) {
      case SweepKind::f0dot: spec.f0dot_norm = v / (opts.fs * opts.fs); break;
      case SweepKind::window: spec.n_samples = static_cast<int>(std::lround(v * opts.fs)); break;
      case SweepKind::f0: spec.f0_norm = v / opts.fs; break;
      case SweepKind::hnr: spec.noise_var = std::pow(10.0, -v / 10.0); break;
    }
    Point pt;
    pt.spec = spec;
    pt.fit_harmonics = detail::fill_spectrum_count(
        spec.f0_norm + std::abs(spec.f0dot_norm) * center_offset(spec.n_samples),
        spec.n_samples, max_l, max_lphi);
    pt.spec.harmonics = pt.fit_harmonics;
    points[ai] = pt;
  }

  const int total_tasks = npoints * realizations;
  std::atomic<int> next_task{0};
  auto worker = [&]() {
    for (;;) {
      const int t = next_task.fetch_add(1);
      if (t >= total_tasks) return;
      const int ai = t / realizations;
      const int r = t % realizations;
      SynthSpec spec = points[ai].spec;
      spec.phase_seed = derive_seed(seed, 0xA11CE, ai, r);
      spec.noise_seed = derive_seed(seed, 0xB0B, ai, r);

      WindowedFrame frame;
      frame.fs = spec.fs;
      frame.samples = synth_signal(spec);

      for (size_t mi = 0; mi < models.size(); ++mi) {
        SweepRealization& slot = result.values[mi][ai][r];
        try {
          ModelConfig cfg = ModelConfig::make(points[ai].fit_harmonics,
                                              models[mi].phase_degree,
                                              models[mi].amp_degree);
          cfg.rho = opts.rho;
          cfg.max_iters = opts.max_iters;
          FitOptions fo;
          fo.init_f0 = spec.f0_norm;
          const FittedModel fm = fit(frame, cfg, fo);
          slot.hnr_db = hnr_overall(fm).db;
          slot.iters = fm.iters;
          slot.converged = fm.converged;
          slot.monotone = detail::trace_monotone(fm.cost_trace);
          slot.ok = true;
        } catch (const std::exception&) {
          slot.ok = false;
        }
      }
    }
  };

  int nthreads = opts.threads > 0
                     ? opts.threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min(nthreads, total_tasks));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return result;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// One row per (axis point, model, realization).
inline void write_sweep_csv(const SweepResult& result, std::ostream& os) {
  os << "axis,config,realization,hnr_db\n";
  char buf[64];
  for (size_t mi = 0; mi < result.models.size(); ++mi)
    for (size_t ai = 0; ai < result.axis.size(); ++ai)
      for (int r = 0; r < result.realizations; ++r) {
        const auto& v = result.values[mi][ai][r];
        std::snprintf(buf, sizeof(buf), "%.17g", result.axis[ai]);
        os << buf << ',' << csv_escape(result.models[mi].label()) << ',' << r << ',';
        if (v.ok) {
          std::snprintf(buf, sizeof(buf), "%.17g", v.hnr_db);
          os << buf;
        }
        os << '\n';
      }
}

inline nlohmann::json sweep_summary_json(const SweepResult& result) {
  nlohmann::json j;
  j["kind"] = sweep_kind_name(result.kind);
  j["axis"] = result.axis;
  j["realizations"] = result.realizations;
  j["seed"] = result.seed;
  nlohmann::json models = nlohmann::json::array();
  for (size_t mi = 0; mi < result.models.size(); ++mi) {
    nlohmann::json m;
    m["config"] = result.models[mi].label();
    std::vector<double> means, stds;
    std::vector<int> counts;
    for (size_t ai = 0; ai < result.axis.size(); ++ai) {
      means.push_back(result.mean_db(static_cast<int>(mi), static_cast<int>(ai)));
      stds.push_back(result.std_db(static_cast<int>(mi), static_cast<int>(ai)));
      counts.push_back(result.ok_count(static_cast<int>(mi), static_cast<int>(ai)));
    }
    m["mean_hnr_db"] = means;
    m["std_hnr_db"] = stds;
    m["ok_count"] = counts;
    models.push_back(m);
  }
  j["models"] = models;
  return j;
}

}  // namespace tvharm
