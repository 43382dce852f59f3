#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tvharm/estimator.hpp"
#include "tvharm/measures.hpp"
#include "tvharm/model.hpp"
#include "tvharm/resample.hpp"
#include "tvharm/vocal_tract.hpp"
#include "tvharm/wav.hpp"

namespace tvharm {

/// Sliding-window batch analysis settings.
struct PipelineConfig {
  double target_fs = 8000.0; // analysis rate; input is decimated to this
  double window_s = 0.05;
  double hop_s = 0.01;

  int phase_degree = 2;
  int amp_degree = 1;
  bool fill_spectrum = true; // otherwise `harmonics` is used as-is
  int harmonics = 0;

  double f0_min_hz = 70.0;
  double f0_max_hz = 500.0;
  double voicing_threshold = 0.3;
  bool warm_start = true; // seed each window with the previous voiced F0

  bool measure_band_hnr = false;
  int band_hnr_count = 5;
  bool measure_rates = true;
  bool measure_tilt = false;
  int ar_order = 16;

  double rho = 1e-10;
  int max_iters = 50;

  void validate() const {
    if (!(target_fs > 0.0)) throw std::invalid_argument("pipeline: target_fs must be positive");
    if (!(window_s > 0.0) || !(hop_s > 0.0) || hop_s > window_s + 1e-12)
      throw std::invalid_argument("pipeline: need 0 < hop_s <= window_s");
    if (!(f0_min_hz > 0.0) || !(f0_max_hz > f0_min_hz) || f0_max_hz >= target_fs / 2.0)
      throw std::invalid_argument("pipeline: bad f0 search band");
    if (!fill_spectrum && harmonics < 1)
      throw std::invalid_argument("pipeline: explicit harmonic count must be >= 1");
    if (phase_degree < 1 || amp_degree < 0)
      throw std::invalid_argument("pipeline: bad model orders");
    if (measure_tilt && ar_order < 1)
      throw std::invalid_argument("pipeline: ar_order must be >= 1");
  }
};

/// Per-window outcome. Absent measures stay unset rather than zero.
struct AnalysisRecord {
  double t_center = 0.0;
  bool voiced = false;
  bool converged = false;
  bool failed = false; // the fit itself errored; degraded to unvoiced
  int iters = 0;
  std::optional<double> f0_hz;
  std::optional<double> hnr_db;
  std::optional<double> f0dot_extreme_hz_s;
  std::optional<double> f0dot_rms_hz_s;
  std::optional<double> psdot_extreme_per_s;
  std::optional<double> psdot_rms_per_s;
  std::optional<double> tilt_db_per_octave;
  std::vector<std::optional<double>> harmonic_hnr_db;

  bool operator==(const AnalysisRecord&) const = default;
};

struct AnalysisResult {
  std::vector<AnalysisRecord> records;
  double fs = 0.0;
  int window_samples = 0;
  int hop_samples = 0;
  int failures = 0;
  int band_count = 0; // per-harmonic HNR columns in the outputs
};

namespace detail {

inline int fill_spectrum_harmonics(double f0_norm) {
  // one f0 bandwidth of guard below Nyquist
  const int p = static_cast<int>(std::floor((0.5 - f0_norm) / f0_norm));
  return std::max(p, 1);
}

}  // namespace detail

/// Runs the sliding-window analysis over already-resampled audio.
inline AnalysisResult analyze_samples(const std::vector<double>& samples, double fs,
                                      const PipelineConfig& config) {
  config.validate();
  AnalysisResult out;
  out.fs = fs;
  out.window_samples = static_cast<int>(std::lround(config.window_s * fs));
  out.hop_samples = static_cast<int>(std::lround(config.hop_s * fs));
  out.band_count = config.measure_band_hnr ? config.band_hnr_count : 0;
  const int N = out.window_samples;
  const int hop = out.hop_samples;
  const auto total = static_cast<std::int64_t>(samples.size());
  if (total < N) return out;

  const double f_lo = config.f0_min_hz / fs;
  const double f_hi = config.f0_max_hz / fs;
  std::optional<double> warm_f0; // normalized, from the previous voiced window

  const std::int64_t n_windows = (total - N) / hop + 1;
  for (std::int64_t w = 0; w < n_windows; ++w) {
    const std::int64_t start = w * hop;
    WindowedFrame frame;
    frame.fs = fs;
    frame.t_center = (static_cast<double>(start) + center_offset(N)) / fs;
    frame.samples = Eigen::Map<const Eigen::VectorXd>(samples.data() + start, N);

    AnalysisRecord rec;
    rec.t_center = frame.t_center;
    try {
      double init_f0 = 0.0;
      bool have_init = false;
      if (config.warm_start && warm_f0 && *warm_f0 > f_lo && *warm_f0 < f_hi) {
        init_f0 = *warm_f0;
        have_init = true;
      }
      if (!have_init) {
        const F0Estimate est =
            init_f0_autocorrelation(frame.samples, f_lo, f_hi, config.voicing_threshold);
        if (est.voiced) {
          init_f0 = est.f0;
          have_init = true;
        }
      }
      if (!have_init) {
        warm_f0.reset();
        out.records.push_back(rec); // unvoiced
        continue;
      }

      int P = config.fill_spectrum ? detail::fill_spectrum_harmonics(init_f0)
                                   : config.harmonics;
      if (config.fill_spectrum) {
        // the f0 bound 0.5/P must leave room for in-window modulation, so
        // trade top harmonics for ~15% of track headroom
        P = std::max(1, std::min(P, static_cast<int>(std::floor(0.5 / (init_f0 * 1.15)))));
      }
      ModelConfig mc = ModelConfig::make(P, config.phase_degree, config.amp_degree);
      mc.f0_min = std::max(0.0, f_lo * 0.5);
      mc.f0_max = std::min(f_hi * 2.0, 0.5 / P);
      mc.rho = config.rho;
      mc.max_iters = config.max_iters;
      if (N < mc.amp_param_count() + mc.phase_degree)
        throw std::runtime_error("window too short for the configured orders");

      FitOptions fo;
      fo.init_f0 = std::clamp(init_f0, std::nextafter(mc.f0_min, 1.0), mc.f0_max);
      const FittedModel fm = fit(frame, mc, fo);

      rec.voiced = fm.voiced;
      rec.converged = fm.converged;
      rec.iters = fm.iters;
      if (fm.voiced) {
        const MeasureSet ms = compute_measures(fm, out.band_count);
        rec.f0_hz = ms.mean_f0_hz;
        if (!ms.hnr_infinite) rec.hnr_db = ms.hnr_db;
        if (config.measure_rates) {
          rec.f0dot_extreme_hz_s = ms.f0dot_extreme_hz_s;
          rec.f0dot_rms_hz_s = ms.f0dot_rms_hz_s;
          rec.psdot_extreme_per_s = ms.psdot_extreme_per_s;
          rec.psdot_rms_per_s = ms.psdot_rms_per_s;
        }
        for (const auto& band : ms.hnr_bands)
          rec.harmonic_hnr_db.push_back(band.no_harmonics
                                            ? std::optional<double>{}
                                            : std::optional<double>{band.db});
        rec.harmonic_hnr_db.resize(out.band_count);
        if (config.measure_tilt && fm.n_samples() > 2 * config.ar_order &&
            fm.v_hat.cwiseAbs().maxCoeff() > 0.0) {
          const ArModel ar = burg_ar(fm.v_hat, config.ar_order);
          const SourceSpectrum src = adjust_harmonic_powers(fm, ms, ar);
          rec.tilt_db_per_octave = src.tilt_db_per_octave;
        }
        warm_f0 = ms.mean_f0_hz ? std::optional<double>{*ms.mean_f0_hz / fs} : std::nullopt;
      } else {
        warm_f0.reset();
      }
    } catch (const std::exception&) {
      rec = AnalysisRecord{};
      rec.t_center = frame.t_center;
      rec.failed = true;
      ++out.failures;
      warm_f0.reset();
    }
    rec.harmonic_hnr_db.resize(out.band_count);
    out.records.push_back(rec);
  }
  return out;
}

/// Reads audio, decimates to the analysis rate, and analyzes.
inline AnalysisResult analyze_file(const std::string& path, const PipelineConfig& config) {
  config.validate();
  const WavData wav = read_wav(path);
  if (config.target_fs > wav.fs)
    throw std::invalid_argument("pipeline: target_fs above the file's sample rate");
  const std::vector<double> x = resample_to(wav.samples, wav.fs, config.target_fs);
  return analyze_samples(x, config.target_fs, config);
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "";
  return fmt_double(*v);
}

}  // namespace detail

/// One RFC-4180 row per record; absent measures are empty fields.
inline void write_csv(const AnalysisResult& result, std::ostream& os) {
  os << "t_center_s,voiced,converged,failed,iters,f0_hz,hnr_db,f0dot_extreme_hz_s,"
        "f0dot_rms_hz_s,psdot_extreme_per_s,psdot_rms_per_s,tilt_db_per_octave";
  for (int p = 1; p <= result.band_count; ++p) os << ",hnr_p" << p;
  os << '\n';
  for (const auto& r : result.records) {
    os << detail::fmt_double(r.t_center) << ',' << (r.voiced ? 1 : 0) << ','
       << (r.converged ? 1 : 0) << ',' << (r.failed ? 1 : 0) << ',' << r.iters << ','
       << detail::fmt_opt(r.f0_hz) << ',' << detail::fmt_opt(r.hnr_db) << ','
       << detail::fmt_opt(r.f0dot_extreme_hz_s) << ',' << detail::fmt_opt(r.f0dot_rms_hz_s)
       << ',' << detail::fmt_opt(r.psdot_extreme_per_s) << ','
       << detail::fmt_opt(r.psdot_rms_per_s) << ',' << detail::fmt_opt(r.tilt_db_per_octave);
    for (int p = 0; p < result.band_count; ++p) {
      os << ',';
      if (p < static_cast<int>(r.harmonic_hnr_db.size()))
        os << detail::fmt_opt(r.harmonic_hnr_db[p]);
    }
    os << '\n';
  }
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

inline std::optional<double> opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline void write_json(const AnalysisResult& result, std::ostream& os) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["fs"] = result.fs;
  j["window_samples"] = result.window_samples;
  j["hop_samples"] = result.hop_samples;
  j["failures"] = result.failures;
  j["band_count"] = result.band_count;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : result.records) {
    nlohmann::json e;
    e["t_center_s"] = r.t_center;
    e["voiced"] = r.voiced;
    e["converged"] = r.converged;
    e["failed"] = r.failed;
    e["iters"] = r.iters;
    e["f0_hz"] = detail::opt_json(r.f0_hz);
    e["hnr_db"] = detail::opt_json(r.hnr_db);
    e["f0dot_extreme_hz_s"] = detail::opt_json(r.f0dot_extreme_hz_s);
    e["f0dot_rms_hz_s"] = detail::opt_json(r.f0dot_rms_hz_s);
    e["psdot_extreme_per_s"] = detail::opt_json(r.psdot_extreme_per_s);
    e["psdot_rms_per_s"] = detail::opt_json(r.psdot_rms_per_s);
    e["tilt_db_per_octave"] = detail::opt_json(r.tilt_db_per_octave);
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : r.harmonic_hnr_db) bands.push_back(detail::opt_json(b));
    e["harmonic_hnr_db"] = bands;
    records.push_back(e);
  }
  j["records"] = records;
  os << j.dump(2) << '\n';
}

inline AnalysisResult load_json(std::istream& is) {
  nlohmann::json j;
  is >> j;
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
    throw std::runtime_error("analysis json: unknown schema version");
  AnalysisResult out;
  out.fs = j["fs"].get<double>();
  out.window_samples = j["window_samples"].get<int>();
  out.hop_samples = j["hop_samples"].get<int>();
  out.failures = j["failures"].get<int>();
  out.band_count = j["band_count"].get<int>();
  for (const auto& e : j["records"]) {
    AnalysisRecord r;
    r.t_center = e["t_center_s"].get<double>();
    r.voiced = e["voiced"].get<bool>();
    r.converged = e["converged"].get<bool>();
    r.failed = e["failed"].get<bool>();
    r.iters = e["iters"].get<int>();
    r.f0_hz = detail::opt_from_json(e["f0_hz"]);
    r.hnr_db = detail::opt_from_json(e["hnr_db"]);
    r.f0dot_extreme_hz_s = detail::opt_from_json(e["f0dot_extreme_hz_s"]);
    r.f0dot_rms_hz_s = detail::opt_from_json(e["f0dot_rms_hz_s"]);
    r.psdot_extreme_per_s = detail::opt_from_json(e["psdot_extreme_per_s"]);
    r.psdot_rms_per_s = detail::opt_from_json(e["psdot_rms_per_s"]);
    r.tilt_db_per_octave = detail::opt_from_json(e["tilt_db_per_octave"]);
    for (const auto& b : e["harmonic_hnr_db"]) r.harmonic_hnr_db.push_back(detail::opt_from_json(b));
    out.records.push_back(std::move(r));
  }
  return out;
}

/// Plot-ready series: window time against F0, HNR and the extreme rates.
inline void write_series_csv(const AnalysisResult& result, std::ostream& os) {
  os << "t_center_s,f0_hz,hnr_db,f0dot_extreme_hz_s,psdot_extreme_per_s\n";
  for (const auto& r : result.records) {
    os << detail::fmt_double(r.t_center) << ',' << detail::fmt_opt(r.f0_hz) << ','
       << detail::fmt_opt(r.hnr_db) << ',' << detail::fmt_opt(r.f0dot_extreme_hz_s) << ','
       << detail::fmt_opt(r.psdot_extreme_per_s) << '\n';
  }
}

}  // namespace tvharm
