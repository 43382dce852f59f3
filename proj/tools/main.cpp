// Command-line front end: sliding-window analysis of WAV files, synthetic
// benchmark sweeps, and synthetic signal rendering.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tvharm/tvharm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitPartial = 3;

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

int run_analyze(const std::string& input, const std::string& prefix_arg,
                tvharm::PipelineConfig config, const std::string& measures,
                const std::string& outputs) {
  for (const auto& m : split_list(measures, ',')) {
    if (m == "hnr") continue; // always computed
    if (m == "band-hnr")
      config.measure_band_hnr = true;
    else if (m == "rates")
      config.measure_rates = true;
    else if (m == "tilt")
      config.measure_tilt = true;
    else {
      std::cerr << "unknown measure: " << m << "\n";
      return kExitConfigError;
    }
  }
  std::vector<std::string> formats = split_list(outputs, ',');
  for (const auto& f : formats) {
    if (f != "csv" && f != "json" && f != "series") {
      std::cerr << "unknown output format: " << f << "\n";
      return kExitConfigError;
    }
  }
  try {
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  std::string prefix = prefix_arg;
  if (prefix.empty()) {
    prefix = input;
    const auto dot = prefix.find_last_of('.');
    if (dot != std::string::npos && dot > prefix.find_last_of('/')) prefix.resize(dot);
  }

  try {
    const tvharm::AnalysisResult result = tvharm::analyze_file(input, config);
    for (const auto& f : formats) {
      if (f == "csv") {
        auto os = open_out(prefix + ".csv");
        tvharm::write_csv(result, os);
      } else if (f == "json") {
        auto os = open_out(prefix + ".json");
        tvharm::write_json(result, os);
      } else {
        auto os = open_out(prefix + "_series.csv");
        tvharm::write_series_csv(result, os);
      }
    }
    int voiced = 0;
    for (const auto& r : result.records) voiced += r.voiced;
    std::cerr << "analyzed " << result.records.size() << " windows (" << voiced << " voiced, "
              << result.failures << " failed)\n";
    return result.failures > 0 ? kExitPartial : kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int run_sweep(const std::string& kind_name, const std::string& configs_arg, int realizations,
              std::uint64_t seed, tvharm::SweepOptions opts, const std::string& prefix) {
  tvharm::SweepKind kind;
  if (kind_name == "f0dot")
    kind = tvharm::SweepKind::f0dot;
  else if (kind_name == "window")
    kind = tvharm::SweepKind::window;
  else if (kind_name == "f0")
    kind = tvharm::SweepKind::f0;
  else if (kind_name == "hnr")
    kind = tvharm::SweepKind::hnr;
  else {
    std::cerr << "unknown sweep kind: " << kind_name << " (f0dot|window|f0|hnr)\n";
    return kExitConfigError;
  }

  std::vector<tvharm::SweepModel> models;
  for (const auto& tok : split_list(configs_arg, ';')) {
    const auto parts = split_list(tok, ',');
    if (parts.size() != 2) {
      std::cerr << "bad --configs entry '" << tok << "', expected LPHI,L\n";
      return kExitConfigError;
    }
    models.push_back({std::stoi(parts[0]), std::stoi(parts[1])});
  }

  try {
    const tvharm::SweepResult result = tvharm::run_sweep(kind, models, realizations, seed, opts);
    {
      auto os = open_out(prefix + ".csv");
      tvharm::write_sweep_csv(result, os);
    }
    {
      auto os = open_out(prefix + ".json");
      os << tvharm::sweep_summary_json(result).dump(2) << "\n";
    }
    for (size_t mi = 0; mi < result.models.size(); ++mi) {
      std::cerr << result.models[mi].label() << ":";
      for (size_t ai = 0; ai < result.axis.size(); ++ai) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %g->%.2fdB", result.axis[ai],
                      result.mean_db(static_cast<int>(mi), static_cast<int>(ai)));
        std::cerr << buf;
      }
      std::cerr << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int run_synth(const std::string& output, tvharm::SynthSpec spec, double duration_s,
              double f0dot_hz_s, double hnr_db, bool pcm16) {
  if (duration_s > 0.0) spec.n_samples = static_cast<int>(std::lround(duration_s * spec.fs));
  spec.f0dot_norm = f0dot_hz_s / (spec.fs * spec.fs);
  if (hnr_db != 0.0 || spec.noise_var < 0.0) spec.noise_var = std::pow(10.0, -hnr_db / 10.0);
  Eigen::VectorXd x;
  try {
    x = tvharm::synth_signal(spec);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  try {
    tvharm::write_wav(output, std::vector<double>(x.data(), x.data() + x.size()), spec.fs,
                      !pcm16);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  std::cerr << "wrote " << x.size() << " samples at " << spec.fs << " S/s to " << output
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-varying harmonic model analysis of voice signals"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "fit sliding windows of a WAV file");
  std::string in_path, out_prefix, measures = "hnr,rates", outputs = "csv,json";
  tvharm::PipelineConfig pc;
  double window_ms = 50.0, hop_ms = 10.0;
  int explicit_p = 0;
  bool fill_spectrum_flag = false;
  analyze->add_option("input", in_path, "input WAV file")->required();
  analyze->add_option("--fs", pc.target_fs, "analysis sample rate, Hz");
  analyze->add_option("--window-ms", window_ms, "analysis window length, ms");
  analyze->add_option("--hop-ms", hop_ms, "evaluation step, ms");
  analyze->add_option("--lphi", pc.phase_degree, "phase polynomial degree");
  analyze->add_option("--l", pc.amp_degree, "amplitude polynomial degree");
  auto* popt = analyze->add_option("--p", explicit_p, "explicit harmonic count");
  analyze->add_flag("--fill-spectrum", fill_spectrum_flag,
                    "pick the harmonic count from the initial F0 (default)");
  analyze->add_option("--f0-min", pc.f0_min_hz, "F0 search lower bound, Hz");
  analyze->add_option("--f0-max", pc.f0_max_hz, "F0 search upper bound, Hz");
  analyze->add_option("--voicing-threshold", pc.voicing_threshold,
                      "autocorrelation peak needed to treat a window as voiced");
  analyze->add_option("--ar-order", pc.ar_order, "AR order for the tilt measure");
  analyze->add_option("--band-hnr-count", pc.band_hnr_count,
                      "number of per-harmonic HNR bands to report");
  analyze->add_option("--measures", measures, "comma list: hnr,band-hnr,rates,tilt");
  analyze->add_option("--out", outputs, "comma list: csv,json,series");
  analyze->add_option("--output-prefix", out_prefix, "output path prefix");
  bool no_warm = false;
  analyze->add_flag("--no-warm-start", no_warm, "re-estimate F0 for every window");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo accuracy sweep on synthetic signals");
  std::string kind_name, configs_arg = "2,0;1,0", sweep_prefix = "sweep";
  int realizations = 200;
  std::uint64_t seed = 1;
  tvharm::SweepOptions sopts;
  double sweep_window_ms = 50.0;
  sweep->add_option("kind", kind_name, "axis: f0dot|window|f0|hnr")->required();
  sweep->add_option("--configs", configs_arg, "model orders, e.g. 2,0;1,0");
  sweep->add_option("--realizations", realizations, "realizations per point");
  sweep->add_option("--seed", seed, "base seed");
  sweep->add_option("--fs", sopts.fs, "sample rate, Hz");
  sweep->add_option("--f0", sopts.base_f0_hz, "base F0, Hz");
  sweep->add_option("--window-ms", sweep_window_ms, "base window, ms");
  sweep->add_option("--f0dot", sopts.base_f0dot_hz_s, "base F0 rate, Hz/s");
  sweep->add_option("--hnr", sopts.base_hnr_db, "base true HNR, dB");
  sweep->add_option("--axis", [&sopts](const std::vector<std::string>& vals) {
    for (const auto& v : vals)
      for (const auto& tok : split_list(v, ',')) sopts.axis.push_back(std::stod(tok));
    return true;
  }, "axis points, comma separated");
  sweep->add_option("--threads", sopts.threads, "worker threads (0 = all cores)");
  sweep->add_option("--output-prefix", sweep_prefix, "output path prefix");

  // synth
  auto* synth = app.add_subcommand("synth", "render a synthetic benchmark signal to WAV");
  std::string synth_out;
  tvharm::SynthSpec spec;
  double duration_s = 0.0, f0_hz = 150.0, f0dot_hz_s = 0.0, hnr_db = 20.0;
  bool pcm16 = false;
  synth->add_option("output", synth_out, "output WAV file")->required();
  synth->add_option("--fs", spec.fs, "sample rate, Hz");
  synth->add_option("--n", spec.n_samples, "sample count");
  synth->add_option("--duration-s", duration_s, "duration in seconds (overrides --n)");
  synth->add_option("--f0", f0_hz, "fundamental frequency, Hz");
  synth->add_option("--f0dot", f0dot_hz_s, "F0 rate of change, Hz/s");
  synth->add_option("--p", spec.harmonics, "harmonic count");
  synth->add_option("--hnr", hnr_db, "true HNR, dB");
  synth->add_option("--phase-seed", spec.phase_seed, "harmonic phase seed");
  synth->add_option("--noise-seed", spec.noise_seed, "noise seed");
  synth->add_flag("--pcm16", pcm16, "write 16-bit PCM instead of 32-bit float");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    app.exit(e);
    return kExitConfigError;
  }

  if (analyze->parsed()) {
    pc.window_s = window_ms / 1000.0;
    pc.hop_s = hop_ms / 1000.0;
    pc.warm_start = !no_warm;
    if (popt->count() > 0 && !fill_spectrum_flag) {
      pc.fill_spectrum = false;
      pc.harmonics = explicit_p;
    }
    return run_analyze(in_path, out_prefix, pc, measures, outputs);
  }
  if (sweep->parsed()) {
    sopts.base_window_s = sweep_window_ms / 1000.0;
    return run_sweep(kind_name, configs_arg, realizations, seed, sopts, sweep_prefix);
  }
  spec.f0_norm = f0_hz / spec.fs;
  return run_synth(synth_out, spec, duration_s, f0dot_hz_s, hnr_db, pcm16);
}
