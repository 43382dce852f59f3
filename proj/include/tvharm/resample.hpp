#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tvharm {

namespace detail {

inline double bessel_i0(double x) {
  // power series; converges fast for the beta values used here
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

/// Kaiser-windowed sinc lowpass. cutoff is normalized to the design rate
/// (cycles/sample), taps count is odd so the delay is an integer.
inline std::vector<double> kaiser_lowpass(int taps, double cutoff, double beta) {
  std::vector<double> h(taps);
  const double c = 0.5 * (taps - 1);
  const double i0b = bessel_i0(beta);
  for (int k = 0; k < taps; ++k) {
    const double t = k - c;
    const double x = 2.0 * cutoff * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    const double r = t / c;
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[k] = 2.0 * cutoff * sinc * w;
  }
  return h;
}

}  // namespace detail

/// Anti-aliased rate conversion (downsampling only): Kaiser FIR lowpass with
/// an 80 dB stopband starting at the new Nyquist, applied polyphase at the
/// rational factor L/M. Output sample m corresponds to input time m*M/L, so
/// tones stay aligned.
inline std::vector<double> resample_to(const std::vector<double>& x, double fs_in,
                                       double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0))
    throw std::invalid_argument("resample_to: rates must be positive");
  if (fs_out > fs_in) throw std::invalid_argument("resample_to: upsampling not supported");
  if (fs_out == fs_in) return x;

  const auto in_i = static_cast<std::int64_t>(std::llround(fs_in));
  const auto out_i = static_cast<std::int64_t>(std::llround(fs_out));
  if (std::abs(fs_in - in_i) > 1e-6 || std::abs(fs_out - out_i) > 1e-6)
    throw std::invalid_argument("resample_to: non-integer sample rates");

  const std::int64_t g = std::gcd(in_i, out_i);
  const std::int64_t up = out_i / g;   // L
  const std::int64_t down = in_i / g;  // M

  const double fs_up = fs_in * static_cast<double>(up);
  const double stop_atten_db = 80.0;
  const double beta = 0.1102 * (stop_atten_db - 8.7);
  const double passband = 0.45 * fs_out;
  const double stopband = 0.50 * fs_out;
  const double delta_w = 2.0 * M_PI * (stopband - passband) / fs_up;
  int taps = static_cast<int>(std::ceil((stop_atten_db - 7.95) / (2.285 * delta_w))) + 1;
  if (taps % 2 == 0) ++taps;
  const double cutoff = 0.5 * (passband + stopband) / fs_up;
  const std::vector<double> h = detail::kaiser_lowpass(taps, cutoff, beta);

  const std::int64_t n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = n_in > 0 ? (n_in - 1) * up / down + 1 : 0;
  const std::int64_t delay = (taps - 1) / 2;

  std::vector<double> y(static_cast<size_t>(n_out), 0.0);
  for (std::int64_t m = 0; m < n_out; ++m) {
    const std::int64_t t_up = m * down + delay; // position on the upsampled grid
    const std::int64_t phase = t_up % up;
    const std::int64_t q0 = (t_up - phase) / up;
    double acc = 0.0;
    for (std::int64_t k = phase; k < taps; k += up) {
      const std::int64_t q = q0 - (k - phase) / up;
      if (q < 0) break;
      if (q >= n_in) continue;
      acc += h[static_cast<size_t>(k)] * x[static_cast<size_t>(q)];
    }
    y[static_cast<size_t>(m)] = acc * static_cast<double>(up);
  }
  return y;
}

}  // namespace tvharm
