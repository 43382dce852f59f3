// Fits one synthetic window and prints the recovered model and measures.

#include <cstdio>

#include "tvharm/tvharm.hpp"

int main() {
  using namespace tvharm;

  SynthSpec spec;
  spec.fs = 5000.0;
  spec.n_samples = 250;        // 50 ms
  spec.f0_norm = 0.03;         // 150 Hz
  spec.f0dot_norm = 2e-5;      // 500 Hz/s
  spec.harmonics = 15;
  spec.noise_var = 0.01;       // 20 dB HNR

  WindowedFrame frame;
  frame.fs = spec.fs;
  frame.samples = synth_signal(spec);

  FitOptions opts;
  opts.init_f0 = spec.f0_norm; // in practice: init_f0_autocorrelation
  const FittedModel model = fit(frame, ModelConfig::make(spec.harmonics, 2, 0), opts);

  const ContinuousParams cp = to_continuous(model);
  const MeasureSet ms = compute_measures(model, 3);

  std::printf("converged=%d after %d iterations\n", model.converged, model.iters);
  std::printf("F0      %8.2f Hz   (true 150.00)\n", cp.f0_hz);
  std::printf("F0 rate %8.1f Hz/s (true 500.0)\n", cp.f0dot_hz_s);
  std::printf("HNR     %8.2f dB   (true 20.00)\n", ms.hnr_db);
  for (size_t p = 0; p < ms.hnr_bands.size(); ++p)
    std::printf("HNR around harmonic %zu: %.2f dB\n", p + 1, ms.hnr_bands[p].db);
  std::printf("harmonic magnitudes at the window center:\n");
  const auto mp = mag_phase(model.amps, model.n_samples() / 2, model.n_samples());
  for (int p = 0; p < 5; ++p)
    std::printf("  p=%d  A=%7.4f  phase=%+6.3f rad\n", p + 1, mp[p].magnitude, mp[p].phase);
  return 0;
}
