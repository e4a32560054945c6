#pragma once

// Normalized-autocorrelation pitch tracking gated by speech segments.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "stan/audio.hpp"
#include "stan/vad.hpp"

namespace stan {

struct PitchConfig {
  double f0_min_hz = 50.0;
  double f0_max_hz = 450.0;
  double voicing_threshold = 0.6;
  int window = 640;  // 40 ms at 16 kHz
  // A shorter-lag peak within this fraction of the best peak wins, which
  // keeps integer multiples of the period from being chosen.
  double octave_ratio = 0.93;
};

struct F0Estimate {
  std::optional<double> f0_hz;
  double confidence = 0.0;
};

/// Normalized autocorrelation with parabolic peak refinement on one window.
inline F0Estimate estimate_frame_f0(std::span<const double> frame, int rate,
                                    const PitchConfig& cfg = {}) {
  const std::size_t n = frame.size();
  const auto lag_min = static_cast<std::size_t>(std::ceil(rate / cfg.f0_max_hz));
  const auto lag_max = static_cast<std::size_t>(std::floor(rate / cfg.f0_min_hz));
  if (lag_min < 2 || n < lag_max + 2) return {};

  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = frame[i] - mean;

  // prefix[i] = sum of x[0..i)^2
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  if (prefix[n] <= 0.0) return {};

  const std::size_t lo = lag_min - 1, hi = lag_max + 1;
  std::vector<double> nac(hi - lo + 1, 0.0);
  for (std::size_t tau = lo; tau <= hi; ++tau) {
    double num = 0.0;
    for (std::size_t i = 0; i + tau < n; ++i) num += x[i] * x[i + tau];
    const double e0 = prefix[n - tau];
    const double e1 = prefix[n] - prefix[tau];
    const double den = std::sqrt(e0 * e1);
    nac[tau - lo] = den > 0.0 ? num / den : 0.0;
  }

  struct Peak {
    double lag, value;
  };
  std::vector<Peak> peaks;
  for (std::size_t tau = lag_min; tau <= lag_max; ++tau) {
    const double a = nac[tau - 1 - lo], b = nac[tau - lo], c = nac[tau + 1 - lo];
    if (!(b >= a && b > c)) continue;
    const double curv = a - 2.0 * b + c;
    const double delta = curv < 0.0 ? std::clamp(0.5 * (a - c) / curv, -0.5, 0.5) : 0.0;
    peaks.push_back({static_cast<double>(tau) + delta, b - 0.25 * (a - c) * delta});
  }
  if (peaks.empty()) return {};

  double best = peaks.front().value;
  for (const auto& p : peaks) best = std::max(best, p.value);
  const Peak* chosen = nullptr;
  for (const auto& p : peaks) {
    if (p.value >= cfg.octave_ratio * best) {
      chosen = &p;
      break;
    }
  }

  F0Estimate est;
  est.confidence = std::clamp(chosen->value, 0.0, 1.0);
  if (est.confidence >= cfg.voicing_threshold) {
    est.f0_hz = std::clamp(rate / chosen->lag, cfg.f0_min_hz, cfg.f0_max_hz);
  }
  return est;
}

struct PitchTrack {
  std::vector<double> frame_times_s;
  std::vector<std::optional<double>> f0_hz;
  std::vector<double> voicing;

  std::size_t size() const { return frame_times_s.size(); }
};

/// 3-frame median over present values; a value keeps its raw estimate unless
/// both neighbours are present.
inline std::vector<std::optional<double>> median_smooth(const std::vector<std::optional<double>>& raw) {
  std::vector<std::optional<double>> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!raw[k]) continue;
    if (k > 0 && k + 1 < raw.size() && raw[k - 1] && raw[k + 1]) {
      double v[3] = {*raw[k - 1], *raw[k], *raw[k + 1]};
      std::sort(v, v + 3);
      out[k] = v[1];
    } else {
      out[k] = raw[k];
    }
  }
  return out;
}

/// Pitch on the MFCC frame grid. Each estimate uses a window centered on the
/// matching MFCC frame (zero-padded at clip edges); frames outside every
/// segment are unvoiced. Present values get a 3-frame median.
inline PitchTrack track_pitch(const AudioClip& clip, const std::vector<SpeechSegment>& segments,
                              const FrameGrid& grid = {}, const PitchConfig& cfg = {}) {
  PitchTrack track;
  const std::size_t n_frames = grid.frame_count(clip.samples.size());
  const double hop_s = grid.hop_s(clip.sample_rate);
  track.frame_times_s.resize(n_frames);
  track.f0_hz.assign(n_frames, std::nullopt);
  track.voicing.assign(n_frames, 0.0);

  const auto win = static_cast<std::ptrdiff_t>(cfg.window);
  const auto n_samples = static_cast<std::ptrdiff_t>(clip.samples.size());
  std::vector<double> buf(static_cast<std::size_t>(cfg.window));
  std::vector<std::optional<double>> raw(n_frames);

  for (std::size_t k = 0; k < n_frames; ++k) {
    track.frame_times_s[k] = static_cast<double>(k) * hop_s;
  }
  for (const auto& seg : segments) {
    // Frames whose start time lies in [start_s, end_s).
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(seg.start_s / hop_s - 1e-9)));
    const auto last_excl = std::min(
        n_frames, static_cast<std::size_t>(std::max(0.0, std::ceil(seg.end_s / hop_s - 1e-9))));
    for (std::size_t k = first; k < last_excl; ++k) {
      const std::ptrdiff_t center =
          static_cast<std::ptrdiff_t>(k) * grid.hop + grid.frame_length / 2;
      const std::ptrdiff_t start = center - win / 2;
      for (std::ptrdiff_t i = 0; i < win; ++i) {
        const std::ptrdiff_t s = start + i;
        buf[static_cast<std::size_t>(i)] =
            (s >= 0 && s < n_samples) ? clip.samples[static_cast<std::size_t>(s)] : 0.0;
      }
      const F0Estimate est = estimate_frame_f0(buf, clip.sample_rate, cfg);
      raw[k] = est.f0_hz;
      track.voicing[k] = est.confidence;
    }
  }

  track.f0_hz = median_smooth(raw);
  return track;
}

}  // namespace stan
