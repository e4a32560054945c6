#pragma once

// Therapist/client speaker filtering: statistics-pooled segment embeddings
// and a linear soft-margin classifier trained by dual coordinate descent.
// The embedder is a stand-in for a neural x-vector and can be replaced
// without touching the classifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "stan/binary_io.hpp"
#include "stan/error.hpp"
#include "stan/features.hpp"
#include "stan/vad.hpp"

namespace stan {

inline constexpr std::size_t kMinEmbedFrames = 10;

/// Mean (n_coeffs) followed by population standard deviation (n_coeffs).
struct SpeakerEmbedding {
  std::vector<double> v;

  bool operator==(const SpeakerEmbedding&) const = default;
};

inline SpeakerEmbedding embed(const FeatureMatrix& fm, std::size_t first, std::size_t count) {
  if (count < kMinEmbedFrames) {
    fail(ErrorCode::kSegmentTooShort, "embedding needs at least 10 frames, got " + std::to_string(count));
  }
  if (first + count > fm.rows()) fail(ErrorCode::kSegmentOutOfRange, "embedding rows out of range");
  const std::size_t d = fm.n_coeffs;
  SpeakerEmbedding e;
  e.v.assign(2 * d, 0.0);
  for (std::size_t k = first; k < first + count; ++k) {
    auto r = fm.row(k);
    for (std::size_t c = 0; c < d; ++c) e.v[c] += r[c];
  }
  for (std::size_t c = 0; c < d; ++c) e.v[c] /= static_cast<double>(count);
  for (std::size_t k = first; k < first + count; ++k) {
    auto r = fm.row(k);
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = r[c] - e.v[c];
      e.v[d + c] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < d; ++c) e.v[d + c] = std::sqrt(e.v[d + c] / static_cast<double>(count));
  return e;
}

inline SpeakerEmbedding embed(const FeatureMatrix& fm) { return embed(fm, 0, fm.rows()); }

/// Frame index range [first, last) whose start times fall inside [start_s, end_s).
inline std::pair<std::size_t, std::size_t> frame_range(const FeatureMatrix& fm, double start_s,
                                                       double end_s) {
  const auto clampi = [&](double t) {
    const double k = std::ceil(t / fm.hop_s - 1e-9);
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(fm.rows())));
  };
  return {clampi(start_s), clampi(end_s)};
}

/// Embeds a segment, or nothing when it has too few frames.
inline std::optional<SpeakerEmbedding> try_embed(const FeatureMatrix& fm, const SpeechSegment& seg) {
  const auto [a, b] = frame_range(fm, seg.start_s, seg.end_s);
  if (b - a < kMinEmbedFrames) return std::nullopt;
  return embed(fm, a, b - a);
}

/// Splits segments into chunk_s pieces for enrollment; a trailing piece is
/// kept when it reaches half a chunk.
inline std::vector<SpeakerEmbedding> enrollment_embeddings(const FeatureMatrix& fm,
                                                           const std::vector<SpeechSegment>& segments,
                                                           double chunk_s = 1.0) {
  std::vector<SpeakerEmbedding> out;
  const auto chunk = static_cast<std::size_t>(std::llround(chunk_s / fm.hop_s));
  for (const auto& seg : segments) {
    auto [a, b] = frame_range(fm, seg.start_s, seg.end_s);
    while (a < b) {
      const std::size_t len = std::min(chunk, b - a);
      if (len >= std::max<std::size_t>(chunk / 2, kMinEmbedFrames)) out.push_back(embed(fm, a, len));
      a += len;
    }
  }
  return out;
}

enum class SpeakerLabel : std::uint8_t { kTherapist, kClient };

inline std::string_view label_name(SpeakerLabel l) {
  return l == SpeakerLabel::kClient ? "client" : "therapist";
}

struct SpeakerTrainingConfig {
  double c = 1.0;
  int max_iterations = 10000;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  // c0 mean: loudness, not identity.
  std::vector<std::size_t> excluded_dims = {0};
};

/// Linear decision on standardized embeddings: client iff w.z + b > 0.
struct SpeakerModel {
  std::vector<double> mean;
  std::vector<double> scale;  // 0 marks an excluded or constant dimension
  std::vector<double> w;
  double b = 0.0;
  double train_margin = 0.0;

  std::size_t dims() const { return w.size(); }

  double decision(const SpeakerEmbedding& e) const {
    if (e.v.size() != w.size()) fail(ErrorCode::kDimensionMismatch, "embedding width differs from model");
    double s = b;
    for (std::size_t d = 0; d < w.size(); ++d)
      if (scale[d] > 0.0) s += w[d] * (e.v[d] - mean[d]) / scale[d];
    return s;
  }

  SpeakerLabel classify(const SpeakerEmbedding& e) const {
    return decision(e) > 0.0 ? SpeakerLabel::kClient : SpeakerLabel::kTherapist;
  }
};

/// Soft-margin linear SVM (hinge loss, penalty C, bias as an augmented
/// constant feature) on z-scored embeddings. Refuses to publish a model that
/// misclassifies any enrollment embedding.
inline SpeakerModel train_speaker_model(const std::vector<SpeakerEmbedding>& therapist,
                                        const std::vector<SpeakerEmbedding>& client,
                                        const SpeakerTrainingConfig& cfg = {}) {
  if (therapist.size() < 3 || client.size() < 3) {
    fail(ErrorCode::kInsufficientData, "need at least 3 enrollment embeddings per speaker");
  }
  const std::size_t dims = therapist.front().v.size();
  std::vector<const SpeakerEmbedding*> pts;
  std::vector<double> y;
  for (const auto& e : therapist) pts.push_back(&e), y.push_back(-1.0);
  for (const auto& e : client) pts.push_back(&e), y.push_back(1.0);
  for (const auto* p : pts)
    if (p->v.size() != dims) fail(ErrorCode::kDimensionMismatch, "embedding widths differ");
  const std::size_t n = pts.size();

  SpeakerModel m;
  m.mean.assign(dims, 0.0);
  m.scale.assign(dims, 0.0);
  for (const auto* p : pts)
    for (std::size_t d = 0; d < dims; ++d) m.mean[d] += p->v[d];
  for (double& v : m.mean) v /= static_cast<double>(n);
  for (const auto* p : pts)
    for (std::size_t d = 0; d < dims; ++d) m.scale[d] += (p->v[d] - m.mean[d]) * (p->v[d] - m.mean[d]);
  for (std::size_t d = 0; d < dims; ++d) {
    const double sd = std::sqrt(m.scale[d] / static_cast<double>(n));
    m.scale[d] = sd > 1e-12 ? sd : 0.0;
  }
  for (std::size_t d : cfg.excluded_dims)
    if (d < dims) m.scale[d] = 0.0;

  // Augmented standardized points [z, 1].
  const std::size_t aug = dims + 1;
  std::vector<double> z(n * aug, 0.0), q(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dims; ++d)
      if (m.scale[d] > 0.0) z[i * aug + d] = (pts[i]->v[d] - m.mean[d]) / m.scale[d];
    z[i * aug + dims] = 1.0;
    for (std::size_t d = 0; d < aug; ++d) q[i] += z[i * aug + d] * z[i * aug + d];
  }

  std::vector<double> alpha(n, 0.0), w(aug, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_pg = -std::numeric_limits<double>::infinity();
    double min_pg = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const double* zi = z.data() + i * aug;
      double dot = 0.0;
      for (std::size_t d = 0; d < aug; ++d) dot += w[d] * zi[d];
      const double g = y[i] * dot - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] >= cfg.c) pg = std::max(g, 0.0);
      max_pg = std::max(max_pg, pg);
      min_pg = std::min(min_pg, pg);
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / q[i], 0.0, cfg.c);
        const double delta = (alpha[i] - old) * y[i];
        for (std::size_t d = 0; d < aug; ++d) w[d] += delta * zi[d];
      }
    }
    if (max_pg - min_pg < cfg.tolerance) break;
  }

  m.w.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(dims));
  m.b = w[dims];
  double norm = 0.0;
  for (double v : m.w) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) fail(ErrorCode::kNotSeparableWell, "enrollment sets are indistinguishable");
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double f = y[i] * m.decision(*pts[i]);
    if (!(f > 0.0)) fail(ErrorCode::kNotSeparableWell, "enrollment embeddings not linearly separated");
    margin = std::min(margin, f / norm);
  }
  m.train_margin = margin;
  return m;
}

// speaker.model layout, little-endian:
//   "STSP" u32 version=1 u32 dims f64 mean[dims] f64 scale[dims] f64 w[dims] f64 b f64 margin
inline constexpr std::uint32_t kSpeakerFormatVersion = 1;

inline Bytes serialize_speaker_model(const SpeakerModel& m) {
  ByteWriter w;
  w.tag("STSP");
  w.u32(kSpeakerFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.dims()));
  for (double v : m.mean) w.f64(v);
  for (double v : m.scale) w.f64(v);
  for (double v : m.w) w.f64(v);
  w.f64(m.b);
  w.f64(m.train_margin);
  return w.take();
}

inline SpeakerModel deserialize_speaker_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::kCorruptArtifact);
  if (r.tag() != "STSP") fail(ErrorCode::kCorruptArtifact, "bad speaker model magic");
  if (r.u32() != kSpeakerFormatVersion) fail(ErrorCode::kCorruptArtifact, "unknown speaker model version");
  const std::uint32_t dims = r.u32();
  if (dims == 0 || dims > 4096) fail(ErrorCode::kCorruptArtifact, "bad speaker model width");
  SpeakerModel m;
  m.mean.resize(dims);
  m.scale.resize(dims);
  m.w.resize(dims);
  for (double& v : m.mean) v = r.f64();
  for (double& v : m.scale) v = r.f64();
  for (double& v : m.w) v = r.f64();
  m.b = r.f64();
  m.train_margin = r.f64();
  if (!r.at_end()) fail(ErrorCode::kCorruptArtifact, "trailing bytes in speaker model");
  return m;
}

struct SpeakerTurn {
  int segment_id = 0;
  SpeakerLabel label = SpeakerLabel::kClient;
  double score = 0.0;  // |w.z + b|; 0 when inherited
  bool inherited = false;
};

struct SpeakerPartition {
  std::vector<SpeakerTurn> turns;  // one per segment, in segment order

  std::vector<int> ids(SpeakerLabel label) const {
    std::vector<int> out;
    for (const auto& t : turns)
      if (t.label == label) out.push_back(t.segment_id);
    return out;
  }
};

/// Labels every segment. `embeddings[i]` belongs to `segments[i]`; segments
/// without an embedding take the label of the nearest embedded segment in
/// time (earlier one on ties), or client when none is embedded.
inline SpeakerPartition filter_client_segments(const std::vector<SpeechSegment>& segments,
                                               const std::vector<std::optional<SpeakerEmbedding>>& embeddings,
                                               const SpeakerModel& model) {
  if (segments.size() != embeddings.size()) {
    fail(ErrorCode::kDimensionMismatch, "one embedding slot per segment required");
  }
  SpeakerPartition part;
  part.turns.resize(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto& t = part.turns[i];
    t.segment_id = segments[i].id;
    if (embeddings[i]) {
      const double s = model.decision(*embeddings[i]);
      t.label = s > 0.0 ? SpeakerLabel::kClient : SpeakerLabel::kTherapist;
      t.score = std::abs(s);
    }
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (embeddings[i]) continue;
    auto& t = part.turns[i];
    t.inherited = true;
    t.score = 0.0;
    t.label = SpeakerLabel::kClient;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < segments.size(); ++j) {
      if (!embeddings[j]) continue;
      const double gap = std::max({0.0, segments[j].start_s - segments[i].end_s,
                                   segments[i].start_s - segments[j].end_s});
      if (gap < best) {
        best = gap;
        t.label = part.turns[j].label;
      }
    }
  }
  return part;
}

/// Every segment labeled client, used when no speaker model is available.
inline SpeakerPartition all_client(const std::vector<SpeechSegment>& segments) {
  SpeakerPartition part;
  for (const auto& s : segments) part.turns.push_back({s.id, SpeakerLabel::kClient, 0.0, false});
  return part;
}

}  // namespace stan
