// Sliding-window analysis of a frequency- and amplitude-modulated signal,
// the kind of trace a tremor study looks at: F0, HNR and the instantaneous
// rates per 10 ms hop.

#include <cmath>
#include <cstdio>
#include <vector>

#include "tvharm/tvharm.hpp"

int main() {
  using namespace tvharm;

  // 1.2 s of a 160 Hz voice-like tone with 4 Hz vibrato (+/- 12 Hz) and a
  // slow amplitude swell, plus noise at 25 dB HNR
  const double fs = 8000.0;
  const int n = static_cast<int>(1.2 * fs);
  std::vector<double> x(n);
  SplitMix64 rng(7);
  double phase = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i / fs;
    const double f0 = 160.0 + 12.0 * std::sin(2 * M_PI * 4.0 * t);
    phase += 2 * M_PI * f0 / fs;
    const double swell = 1.0 + 0.25 * std::sin(2 * M_PI * 1.3 * t);
    double s = 0.0;
    for (int p = 1; p <= 8; ++p)
      s += swell * std::pow(2.0, 1 - p) * std::cos(p * phase + 0.5 * p);
    x[i] = s + 0.07 * rng.normal();
  }

  PipelineConfig config;
  config.target_fs = fs;
  config.phase_degree = 2;
  config.amp_degree = 1;
  const AnalysisResult result = analyze_samples(x, fs, config);

  std::printf("   t/s    F0/Hz   HNR/dB   dF0/(Hz/s)   dPs/(1/s)\n");
  for (size_t i = 0; i < result.records.size(); i += 4) {
    const auto& r = result.records[i];
    if (!r.voiced) continue;
    std::printf("%6.2f  %7.1f  %7.2f  %+11.0f  %+10.2f\n", r.t_center, *r.f0_hz, *r.hnr_db,
                *r.f0dot_extreme_hz_s, *r.psdot_extreme_per_s);
  }
  // the vibrato extreme is 2*pi*4*12 ~ 300 Hz/s; the printed dF0 column
  // should swing between roughly +300 and -300
  return 0;
}
