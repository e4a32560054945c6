#pragma once

// Deterministic signal generators for fixtures and the bundled demo model.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "stan/audio.hpp"

namespace stan::synth {

/// Uniform in [-1, 1) from raw engine bits, independent of the standard
/// library's distribution implementations.
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : rng_(seed) {}

  double uniform() {
    return static_cast<double>(rng_() >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  }

  /// Approximately standard normal (sum of 12 uniforms on [0, 1), minus 6).
  double gaussian() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += 0.5 * (uniform() + 1.0);
    return s - 6.0;
  }

 private:
  std::mt19937_64 rng_;
};

inline std::size_t samples_for(double seconds, int rate = kCanonicalRate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

inline std::vector<double> sine(double hz, double seconds, double amplitude = 0.5,
                                int rate = kCanonicalRate, double phase = 0.0) {
  std::vector<double> out(samples_for(seconds, rate));
  for (std::size_t n = 0; n < out.size(); ++n)
    out[n] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / rate + phase);
  return out;
}

/// Linear-frequency chirp from f_start to f_end.
inline std::vector<double> chirp(double f_start, double f_end, double seconds, double amplitude = 0.5,
                                 int rate = kCanonicalRate) {
  std::vector<double> out(samples_for(seconds, rate));
  const double k = (f_end - f_start) / seconds;
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double t = static_cast<double>(n) / rate;
    out[n] = amplitude * std::sin(2.0 * std::numbers::pi * (f_start * t + 0.5 * k * t * t));
  }
  return out;
}

/// Sum of harmonics of f0 below `max_hz` with 1/h amplitudes, peak-normalized.
inline std::vector<double> harmonic(double f0, double seconds, double amplitude = 0.5,
                                    double max_hz = 4000.0, int rate = kCanonicalRate) {
  std::vector<double> out(samples_for(seconds, rate), 0.0);
  for (int h = 1; h * f0 < max_hz; ++h) {
    for (std::size_t n = 0; n < out.size(); ++n)
      out[n] += std::sin(2.0 * std::numbers::pi * h * f0 * static_cast<double>(n) / rate) / h;
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= amplitude / peak;
  return out;
}

inline std::vector<double> white(double seconds, double amplitude, std::uint64_t seed,
                                 int rate = kCanonicalRate) {
  Noise noise(seed);
  std::vector<double> out(samples_for(seconds, rate));
  for (double& v : out) v = amplitude * noise.uniform();
  return out;
}

inline std::vector<double> silence(double seconds, int rate = kCanonicalRate) {
  return std::vector<double>(samples_for(seconds, rate), 0.0);
}

/// Two-pole resonator at `hz` with bandwidth `bw_hz`, unity peak gain (approx).
inline std::vector<double> resonate(const std::vector<double>& x, double hz, double bw_hz,
                                    int rate = kCanonicalRate) {
  const double r = std::exp(-std::numbers::pi * bw_hz / rate);
  const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * hz / rate);
  const double a2 = -r * r;
  const double g = 1.0 - r;
  std::vector<double> y(x.size());
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = g * x[n] + a1 * y1 + a2 * y2;
    y[n] = v;
    y2 = y1;
    y1 = v;
  }
  return y;
}

inline void normalize_peak(std::vector<double>& x, double amplitude) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v *= amplitude / peak;
}

inline void add_into(std::vector<double>& dst, const std::vector<double>& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size() && i < src.size(); ++i) dst[i] += scale * src[i];
}

inline void append(std::vector<double>& dst, const std::vector<double>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

/// A voiced "speaker": harmonic source through two formant resonators.
inline std::vector<double> voiced(double f0, double f1, double f2, double seconds, double amplitude,
                                  int rate = kCanonicalRate) {
  const auto src = harmonic(f0, seconds, 1.0, 7000.0, rate);
  auto y = resonate(src, f1, 90.0, rate);
  add_into(y, resonate(src, f2, 120.0, rate), 0.7);
  normalize_peak(y, amplitude);
  return y;
}

inline AudioClip make_clip(std::vector<double> samples, int rate = kCanonicalRate) {
  AudioClip c;
  c.samples = std::move(samples);
  c.sample_rate = rate;
  for (double& v : c.samples) v = std::clamp(v, -1.0, 1.0);
  return c;
}

}  // namespace stan::synth
