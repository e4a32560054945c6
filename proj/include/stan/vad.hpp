#pragma once

// Energy-based voice activity detection with a noise-floor-relative threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "stan/audio.hpp"
#include "stan/error.hpp"

namespace stan {

struct SpeechSegment {
  int id = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double mean_log_energy = 0.0;

  double duration_s() const { return end_s - start_s; }
};

struct VadConfig {
  double percentile = 0.10;
  double margin = 2.3;  // nats above the percentile (about +10 dB)
  double gap_close_s = 0.20;
  double min_segment_s = 0.25;
};

/// Lower nearest-rank percentile: sorted[floor(q * (n - 1))].
inline double lower_percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

/// Threshold at P10 + margin, close short gaps, drop short runs.
/// Segment k spans [first_frame * hop, (last_frame + 1) * hop).
inline std::vector<SpeechSegment> detect_speech(const std::vector<double>& log_energy, double hop_s,
                                                const VadConfig& cfg = {}) {
  std::vector<SpeechSegment> out;
  if (log_energy.empty()) return out;
  const double threshold = lower_percentile(log_energy, cfg.percentile) + cfg.margin;
  // Frame-count versions of the time rules; a gap of exactly gap_close_s stays open.
  const auto max_gap = static_cast<std::size_t>(std::llround(cfg.gap_close_s / hop_s));
  const auto min_run = static_cast<std::size_t>(std::llround(cfg.min_segment_s / hop_s));

  struct Run {
    std::size_t first, last;  // inclusive
  };
  std::vector<Run> runs;
  for (std::size_t k = 0; k < log_energy.size(); ++k) {
    if (!(log_energy[k] > threshold)) continue;
    if (!runs.empty() && k - runs.back().last - 1 < max_gap) {
      runs.back().last = k;
    } else {
      runs.push_back({k, k});
    }
  }
  for (const Run& r : runs) {
    if (r.last - r.first + 1 < min_run) continue;
    SpeechSegment seg;
    seg.id = static_cast<int>(out.size());
    seg.start_s = static_cast<double>(r.first) * hop_s;
    seg.end_s = static_cast<double>(r.last + 1) * hop_s;
    double sum = 0.0;
    for (std::size_t k = r.first; k <= r.last; ++k) sum += log_energy[k];
    seg.mean_log_energy = sum / static_cast<double>(r.last - r.first + 1);
    out.push_back(seg);
  }
  return out;
}

/// Sample-accurate slices of `clip`, one per segment.
inline std::vector<AudioClip> segment_clip(const AudioClip& clip,
                                           const std::vector<SpeechSegment>& segments) {
  std::vector<AudioClip> out;
  out.reserve(segments.size());
  const double dur = clip.duration_s();
  constexpr double kSlack = 1e-9;
  for (const auto& seg : segments) {
    if (seg.start_s < 0.0 || seg.end_s <= seg.start_s || seg.end_s > dur + kSlack) {
      fail(ErrorCode::kSegmentOutOfRange, "segment outside clip bounds");
    }
    const std::size_t a = sample_index(seg.start_s, clip.sample_rate);
    const std::size_t b = std::min(sample_index(seg.end_s, clip.sample_rate), clip.samples.size());
    AudioClip piece;
    piece.sample_rate = clip.sample_rate;
    piece.source_id = clip.source_id;
    piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(a),
                         clip.samples.begin() + static_cast<std::ptrdiff_t>(b));
    out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace stan
