#pragma once

// The per-session analysis: features, VAD, speaker filtering, pitch,
// posteriors, phone decoding and event detection, serialized as the
// analysis bundle the review UI consumes.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stan/audio.hpp"
#include "stan/config.hpp"
#include "stan/events.hpp"
#include "stan/features.hpp"
#include "stan/phones.hpp"
#include "stan/pitch.hpp"
#include "stan/speaker.hpp"
#include "stan/vad.hpp"

namespace stan {

inline constexpr std::string_view kPipelineVersion = "stan-pipeline/1.0.0";
inline constexpr double kDisplayRowsPerSecond = 100.0;

/// Speaker enrollment material gathered before the recording is analyzed.
struct Enrollment {
  std::vector<SpeakerEmbedding> therapist;
  std::vector<SpeakerEmbedding> client;
};

enum class SpeakerFilterStatus { kApplied, kNoEnrollment, kNoClientMaterial, kNotSeparable };

inline std::string_view status_name(SpeakerFilterStatus s) {
  switch (s) {
    case SpeakerFilterStatus::kApplied: return "applied";
    case SpeakerFilterStatus::kNoEnrollment: return "no_enrollment";
    case SpeakerFilterStatus::kNoClientMaterial: return "no_client_material";
    case SpeakerFilterStatus::kNotSeparable: return "not_separable";
  }
  return "unknown";
}

struct AnalysisResult {
  double duration_s = 0.0;
  FeatureMatrix features;
  std::vector<SpeechSegment> segments;
  SpeakerPartition partition;
  SpeakerFilterStatus speaker_status = SpeakerFilterStatus::kNoEnrollment;
  std::optional<SpeakerModel> speaker_model;
  std::vector<TimeInterval> client_turns;
  PitchTrack pitch;
  CategoryMatrix categories;
  std::vector<PhoneSegment> phones;
  std::vector<StutterEvent> events;
};

using ProgressFn = std::function<void(double)>;

/// Maximal runs of consecutive client-labeled segments, as time intervals.
inline std::vector<TimeInterval> client_turn_intervals(const std::vector<SpeechSegment>& segments,
                                                       const SpeakerPartition& part) {
  std::vector<TimeInterval> out;
  bool open = false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (part.turns[i].label != SpeakerLabel::kClient) {
      open = false;
      continue;
    }
    if (open) {
      out.back().end_s = segments[i].end_s;
    } else {
      out.push_back({segments[i].start_s, segments[i].end_s});
      open = true;
    }
  }
  return out;
}

/// Rows [first, last) of a posterior matrix as a standalone matrix.
inline PosteriorMatrix slice_rows(const PosteriorMatrix& m, std::size_t first, std::size_t last) {
  PosteriorMatrix out;
  out.n_phones = m.n_phones;
  out.hop_s = m.hop_s;
  out.start_s = m.time(first);
  out.p.assign(m.p.begin() + static_cast<std::ptrdiff_t>(first * m.n_phones),
               m.p.begin() + static_cast<std::ptrdiff_t>(last * m.n_phones));
  return out;
}

/// Runs the full analysis on a canonical-rate clip.
///
/// Client enrollment falls back to the recording's first speech segment when
/// `first_segment_is_client` is set (reading task) and no client material
/// was enrolled.
inline AnalysisResult analyze(const AudioClip& clip, const AcousticModel& model, const PhoneSet& set,
                              const AnalysisConfig& cfg, const Enrollment& enrollment = {},
                              bool first_segment_is_client = false, const ProgressFn& progress = {}) {
  auto report = [&](double p) {
    if (progress) progress(p);
  };
  AnalysisResult r;
  r.duration_s = clip.duration_s();

  r.features = compute_features(clip);
  quantize_to_f32(r.features);
  report(0.15);

  r.segments = detect_speech(r.features.log_energy, r.features.hop_s, cfg.vad);
  report(0.25);

  std::vector<std::optional<SpeakerEmbedding>> seg_embeds;
  for (const auto& s : r.segments) seg_embeds.push_back(try_embed(r.features, s));
  r.partition = all_client(r.segments);
  if (!enrollment.therapist.empty()) {
    std::vector<SpeakerEmbedding> client = enrollment.client;
    if (client.empty() && first_segment_is_client && !r.segments.empty()) {
      client = enrollment_embeddings(r.features, {r.segments.front()}, cfg.enroll_chunk_s);
    }
    if (client.size() < 3) {
      r.speaker_status = SpeakerFilterStatus::kNoClientMaterial;
    } else {
      try {
        r.speaker_model = train_speaker_model(enrollment.therapist, client, cfg.speaker);
        r.partition = filter_client_segments(r.segments, seg_embeds, *r.speaker_model);
        r.speaker_status = SpeakerFilterStatus::kApplied;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotSeparableWell && e.code() != ErrorCode::kInsufficientData) throw;
        r.speaker_status = SpeakerFilterStatus::kNotSeparable;
      }
    }
  }
  r.client_turns = client_turn_intervals(r.segments, r.partition);
  report(0.35);

  std::vector<SpeechSegment> client_segments;
  for (std::size_t i = 0; i < r.segments.size(); ++i)
    if (r.partition.turns[i].label == SpeakerLabel::kClient) client_segments.push_back(r.segments[i]);
  r.pitch = track_pitch(clip, client_segments, FrameGrid{}, cfg.pitch);
  report(0.55);

  const PosteriorMatrix post = forward(model, r.features);
  report(0.7);
  r.categories = category_posteriors(post, set);
  report(0.75);

  std::vector<std::vector<PhoneSegment>> per_turn;
  for (const auto& turn : r.client_turns) {
    const auto [a, b] = frame_range(r.features, turn.start_s, turn.end_s);
    if (a >= b) continue;
    per_turn.push_back(decode_phones(slice_rows(post, a, b), set, cfg.decoder_min_frames));
    r.phones.insert(r.phones.end(), per_turn.back().begin(), per_turn.back().end());
  }
  report(0.85);

  r.events = detect_events(per_turn, r.client_turns, set, cfg.events);
  report(0.95);
  return r;
}

namespace detail {

inline double round_to(double v, double scale) { return std::round(v * scale) / scale; }
inline double ms(double t) { return round_to(t, 1e3); }

}  // namespace detail

inline nlohmann::json event_to_json(const StutterEvent& e) {
  nlohmann::json ev = {{"phones", e.evidence.phones}};
  for (const auto& [k, v] : e.evidence.values) ev[k] = detail::round_to(v, 1e6);
  return {{"kind", kind_name(e.kind)},
          {"start_s", detail::ms(e.start_s)},
          {"end_s", detail::ms(e.end_s)},
          {"score", detail::round_to(e.score, 1e6)},
          {"evidence", ev}};
}

/// Category posteriors averaged down to at most kDisplayRowsPerSecond rows/s.
inline nlohmann::json display_categories(const CategoryMatrix& cat) {
  const auto factor = static_cast<std::size_t>(
      std::max(1.0, std::ceil(1.0 / (cat.hop_s * kDisplayRowsPerSecond) - 1e-9)));
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < cat.rows(); k += factor) {
    const std::size_t end = std::min(cat.rows(), k + factor);
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      double s = 0.0;
      for (std::size_t j = k; j < end; ++j) s += cat.row(j)[c];
      row.push_back(detail::round_to(s / static_cast<double>(end - k), 1e4));
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json names = nlohmann::json::array();
  for (auto n : kCategoryNames) names.push_back(n);
  return {{"categories", names},
          {"start_s", detail::ms(cat.start_s)},
          {"row_hop_s", cat.hop_s * static_cast<double>(factor)},
          {"rows", rows}};
}

/// The analysis.json document. Key order and number formatting are fixed, so
/// identical inputs give byte-identical output.
inline nlohmann::json bundle_json(const AnalysisResult& r, const AnalysisConfig& cfg) {
  using detail::ms;
  nlohmann::json j;
  j["pipeline_version"] = kPipelineVersion;
  j["config"] = cfg.to_json();
  j["duration_s"] = ms(r.duration_s);
  j["hop_s"] = r.features.hop_s;

  auto& segs = j["segments"] = nlohmann::json::array();
  for (const auto& s : r.segments) segs.push_back({{"id", s.id}, {"start_s", ms(s.start_s)}, {"end_s", ms(s.end_s)}});

  auto& turns = j["turns"] = nlohmann::json::array();
  for (const auto& t : r.partition.turns) {
    turns.push_back({{"segment_id", t.segment_id},
                     {"label", label_name(t.label)},
                     {"score", detail::round_to(t.score, 1e6)}});
  }
  j["speaker_filter"] = {{"status", status_name(r.speaker_status)},
                         {"train_margin", r.speaker_model ? detail::round_to(r.speaker_model->train_margin, 1e6) : 0.0}};

  nlohmann::json t_s = nlohmann::json::array(), f0 = nlohmann::json::array(), voicing = nlohmann::json::array();
  for (std::size_t k = 0; k < r.pitch.size(); ++k) {
    t_s.push_back(ms(r.pitch.frame_times_s[k]));
    f0.push_back(r.pitch.f0_hz[k] ? nlohmann::json(detail::round_to(*r.pitch.f0_hz[k], 1e2)) : nlohmann::json());
    voicing.push_back(detail::round_to(r.pitch.voicing[k], 1e3));
  }
  j["pitch"] = {{"t_s", t_s}, {"f0_hz", f0}, {"voicing", voicing}};
  j["category_posteriors"] = display_categories(r.categories);

  auto& phones = j["phones"] = nlohmann::json::array();
  for (const auto& p : r.phones) {
    phones.push_back({{"phone", p.phone},
                      {"start_s", ms(p.start_s)},
                      {"end_s", ms(p.end_s)},
                      {"conf", detail::round_to(p.mean_posterior, 1e4)}});
  }
  auto& events = j["events"] = nlohmann::json::array();
  for (const auto& e : r.events) events.push_back(event_to_json(e));
  return j;
}

inline std::string bundle_text(const nlohmann::json& bundle) { return bundle.dump(1) + "\n"; }

}  // namespace stan
