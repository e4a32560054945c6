#pragma once

// Session lifecycle and background analysis jobs behind the HTTP API.

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stan/audio.hpp"
#include "stan/config.hpp"
#include "stan/error.hpp"
#include "stan/features.hpp"
#include "stan/phones.hpp"
#include "stan/pipeline.hpp"
#include "stan/store.hpp"

namespace stan {

enum class JobState { kQueued, kRunning, kDone, kFailed };

inline std::string_view job_state_name(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

struct AnalysisJob {
  std::string id;
  std::string session_id;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string error;

  bool active() const { return state == JobState::kQueued || state == JobState::kRunning; }
};

inline nlohmann::json job_json(const AnalysisJob& j) {
  return {{"id", j.id},
          {"session_id", j.session_id},
          {"state", job_state_name(j.state)},
          {"progress", j.progress},
          {"error", j.error}};
}

/// Thrown by get_analysis while a session is still being processed.
class NotReady : public Error {
 public:
  explicit NotReady(double progress)
      : Error(ErrorCode::kNotReady, "analysis not ready"), progress_(progress) {}
  double progress() const { return progress_; }

 private:
  double progress_;
};

enum class SpeakerRole { kTherapist, kClient };

struct ServiceOptions {
  fs::path data_dir = "stan-data";
  AnalysisConfig config;
  std::shared_ptr<const AcousticModel> model;
  PhoneSet phones = PhoneSet::english();
  /// Fixed clock for tests; real time when empty.
  std::function<std::int64_t()> clock;
};

inline constexpr double kMaxSpectrogramSpanS = 10.0;

class Service {
 public:
  explicit Service(ServiceOptions opts) : opts_(std::move(opts)), store_(opts_.data_dir) {
    if (!opts_.model) fail(ErrorCode::kInvalidConfig, "service needs an acoustic model");
    if (opts_.model->n_phones() != opts_.phones.size()) {
      fail(ErrorCode::kDimensionMismatch, "model and phone set disagree on phone count");
    }
    store_.repair();
    // Jobs do not survive a restart.
    SessionFilter processing;
    processing.state = SessionState::kProcessing;
    for (const auto& s : store_.list_sessions(processing)) {
      Session failed = s;
      failed.state = SessionState::kFailed;
      failed.error = "interrupted by service restart";
      store_.save_session(failed);
    }
    const int workers = std::max(1, opts_.config.workers);
    for (int i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  ~Service() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  SessionStore& store() { return store_; }
  const AnalysisConfig& config() const { return opts_.config; }

  Session create_session(TaskKind task, std::optional<std::string> reading_text) {
    if (task == TaskKind::kReading && (!reading_text || reading_text->empty())) {
      fail(ErrorCode::kMissingReadingText, "reading task requires reading_text");
    }
    Session s;
    s.id = new_session_id();
    s.created_at_ms = opts_.clock ? opts_.clock() : now_ms();
    s.task = task;
    if (task == TaskKind::kReading) s.reading_text = std::move(reading_text);
    store_.save_session(s);
    return s;
  }

  Session get_session(const std::string& id) const { return store_.load_session(id).session; }

  std::vector<Session> list_sessions(const SessionFilter& f = {}) const { return store_.list_sessions(f); }

  /// Stores enrollment embeddings for one speaker role.
  nlohmann::json enroll(const std::string& id, SpeakerRole role, std::span<const std::uint8_t> audio) {
    std::lock_guard lock(session_mu(id));
    StoredSession stored = store_.load_session(id);
    if (stored.session.state != SessionState::kRecording) {
      fail(ErrorCode::kInvalidState, "enrollment is only possible while recording");
    }
    const AudioClip clip = canonical_clip(audio).second;
    FeatureMatrix fm = compute_features(clip);
    quantize_to_f32(fm);
    const auto segments = detect_speech(fm.log_energy, fm.hop_s, opts_.config.vad);
    double speech_s = 0.0;
    for (const auto& s : segments) speech_s += s.duration_s();
    if (speech_s + 1e-9 < opts_.config.enroll_min_speech_s) {
      fail(ErrorCode::kTooLittleSpeech, "enrollment needs " + std::to_string(opts_.config.enroll_min_speech_s) +
                                            " s of speech, found " + std::to_string(speech_s));
    }
    const auto embeds = enrollment_embeddings(fm, segments, opts_.config.enroll_chunk_s);
    Enrollment e = stored.has(Artifact::kEnrollment) ? load_enrollment(stored) : Enrollment{};
    (role == SpeakerRole::kTherapist ? e.therapist : e.client) = embeds;
    store_.save_session(stored.session, {{Artifact::kEnrollment, to_bytes(enrollment_json(e).dump())}});
    return {{"role", role == SpeakerRole::kTherapist ? "therapist" : "client"},
            {"speech_s", detail::ms(speech_s)},
            {"embeddings", embeds.size()},
            {"therapist_enrolled", !e.therapist.empty()},
            {"client_enrolled", !e.client.empty()}};
  }

  /// Appends a live-recording chunk; analysis waits for finish_recording.
  nlohmann::json append_chunk(const std::string& id, std::span<const std::uint8_t> audio) {
    std::lock_guard lock(session_mu(id));
    const Session s = store_.load_session(id).session;
    if (s.state != SessionState::kRecording) fail(ErrorCode::kInvalidState, "session is not recording");
    const AudioClip clip = canonical_clip(audio).second;
    std::lock_guard guard(mu_);
    auto& buf = chunks_[id];
    buf.insert(buf.end(), clip.samples.begin(), clip.samples.end());
    return {{"buffered_s", detail::ms(static_cast<double>(buf.size()) / kCanonicalRate)}};
  }

  /// Submits the accumulated chunks as the session recording.
  std::string finish_recording(const std::string& id) {
    std::vector<double> samples;
    {
      std::lock_guard guard(mu_);
      auto it = chunks_.find(id);
      if (it == chunks_.end() || it->second.empty()) fail(ErrorCode::kInvalidState, "no recorded chunks");
      samples = it->second;
    }
    const std::string job = submit_recording(id, encode_wav(samples, kCanonicalRate));
    std::lock_guard guard(mu_);
    chunks_.erase(id);
    return job;
  }

  /// Persists the recording and queues the analysis job.
  std::string submit_recording(const std::string& id, std::span<const std::uint8_t> audio) {
    std::lock_guard lock(session_mu(id));
    StoredSession stored = store_.load_session(id);
    Session s = stored.session;
    if (s.state != SessionState::kRecording) {
      fail(ErrorCode::kInvalidState, "session " + id + " is " + std::string(state_name(s.state)));
    }
    Bytes canonical;
    try {
      canonical = canonical_clip(audio).first;
    } catch (const Error& e) {
      s.state = SessionState::kProcessing;
      store_.save_session(s);
      s.state = SessionState::kFailed;
      s.error = e.what();
      store_.save_session(s);
      fail(ErrorCode::kMalformedAudio, e.what());
    }
    s.state = SessionState::kProcessing;
    store_.save_session(s, {{Artifact::kAudio, std::move(canonical)}});

    std::lock_guard guard(mu_);
    AnalysisJob job;
    job.id = "job-" + new_session_id().substr(0, 16);
    job.session_id = id;
    jobs_[job.id] = job;
    active_by_session_[id] = job.id;
    queue_.push_back(job.id);
    cv_.notify_one();
    return job.id;
  }

  AnalysisJob get_job(const std::string& job_id) const {
    std::lock_guard guard(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) fail(ErrorCode::kNotFound, "no job " + job_id);
    return it->second;
  }

  std::optional<AnalysisJob> job_for_session(const std::string& id) const {
    std::lock_guard guard(mu_);
    auto it = active_by_session_.find(id);
    if (it == active_by_session_.end()) return std::nullopt;
    return jobs_.at(it->second);
  }

  /// The stored bundle of an analyzed session.
  nlohmann::json get_analysis(const std::string& id) const {
    const StoredSession s = store_.load_session(id);
    switch (s.session.state) {
      case SessionState::kAnalyzed: return store_.read_bundle(s);
      case SessionState::kFailed: fail(ErrorCode::kInvalidState, "analysis failed: " + s.session.error);
      case SessionState::kRecording: throw NotReady(0.0);
      case SessionState::kProcessing: {
        const auto job = job_for_session(id);
        throw NotReady(job ? std::min(job->progress, 0.99) : 0.0);
      }
    }
    fail(ErrorCode::kInvalidState, "unknown session state");
  }

  SpectrogramSlice get_spectrogram(const std::string& id, double from_s, double to_s) const {
    check_span_order(from_s, to_s);
    if (to_s - from_s >= kMaxSpectrogramSpanS) {
      fail(ErrorCode::kSpanTooLong, "spectrogram spans must be shorter than 10 s");
    }
    const AudioClip clip = analyzed_audio(id);
    check_range(clip, from_s, to_s);
    AudioClip piece;
    piece.samples = slice_samples(clip, from_s, to_s);
    const Frames frames = frame_signal(piece, FrameGrid{});
    SpectrogramSlice spec = power_spectrum(frames, 512, kCanonicalRate);
    spec.start_s = from_s;
    spec.end_s = to_s;
    spec.hop_s = FrameGrid{}.hop_s();
    return spec;
  }

  Bytes get_audio_slice(const std::string& id, double from_s, double to_s) const {
    check_span_order(from_s, to_s);
    const AudioClip clip = analyzed_audio(id);
    check_range(clip, from_s, to_s);
    return encode_wav(slice_samples(clip, from_s, to_s), kCanonicalRate);
  }

  /// Blocks until no job is queued or running.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
  }

  static nlohmann::json enrollment_json(const Enrollment& e) {
    auto rows = [](const std::vector<SpeakerEmbedding>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& x : v) a.push_back(x.v);
      return a;
    };
    return {{"therapist", rows(e.therapist)}, {"client", rows(e.client)}};
  }

 private:
  /// Decodes any supported upload and returns canonical 16 kHz s16 bytes with
  /// the clip those bytes decode to.
  static std::pair<Bytes, AudioClip> canonical_clip(std::span<const std::uint8_t> audio) {
    AudioClip clip;
    try {
      clip = decode_wav(audio);
    } catch (const Error& e) {
      fail(ErrorCode::kMalformedAudio, e.what());
    }
    if (clip.sample_rate != kCanonicalRate) clip = resample(clip, kCanonicalRate);
    Bytes bytes = encode_wav(clip);
    AudioClip stored = decode_wav(bytes);
    return {std::move(bytes), std::move(stored)};
  }

  Enrollment load_enrollment(const StoredSession& s) const {
    const Bytes b = store_.read_artifact(s, Artifact::kEnrollment);
    Enrollment e;
    try {
      const auto j = nlohmann::json::parse(b.begin(), b.end());
      for (const auto& v : j.at("therapist")) e.therapist.push_back({v.get<std::vector<double>>()});
      for (const auto& v : j.at("client")) e.client.push_back({v.get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::kCorruptArtifact, std::string("enrollment.json: ") + ex.what());
    }
    return e;
  }

  AudioClip analyzed_audio(const std::string& id) const {
    const StoredSession s = store_.load_session(id);
    if (s.session.state != SessionState::kAnalyzed) throw NotReady(0.0);
    return decode_wav(store_.read_artifact(s, Artifact::kAudio), id);
  }

  static void check_span_order(double from_s, double to_s) {
    if (!(from_s < to_s)) fail(ErrorCode::kRangeOutOfBounds, "range must satisfy from < to");
  }

  static void check_range(const AudioClip& clip, double from_s, double to_s) {
    if (from_s < 0.0 || to_s > clip.duration_s() + 1e-9) {
      fail(ErrorCode::kRangeOutOfBounds, "range outside [0, " + std::to_string(clip.duration_s()) + "]");
    }
  }

  static std::vector<double> slice_samples(const AudioClip& clip, double from_s, double to_s) {
    const std::size_t a = std::min(sample_index(from_s, clip.sample_rate), clip.samples.size());
    const std::size_t b = std::min(sample_index(to_s, clip.sample_rate), clip.samples.size());
    return {clip.samples.begin() + static_cast<std::ptrdiff_t>(a),
            clip.samples.begin() + static_cast<std::ptrdiff_t>(b)};
  }

  std::mutex& session_mu(const std::string& id) {
    std::lock_guard guard(mu_);
    auto& m = session_mus_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  void set_progress(const std::string& job_id, double p) {
    std::lock_guard guard(mu_);
    auto& job = jobs_.at(job_id);
    job.progress = std::max(job.progress, std::clamp(p, 0.0, 1.0));
  }

  void finish_job(const std::string& job_id, JobState state, const std::string& error) {
    std::lock_guard guard(mu_);
    auto& job = jobs_.at(job_id);
    job.state = state;
    job.error = error;
    if (state == JobState::kDone) job.progress = 1.0;
    active_by_session_.erase(job.session_id);
  }

  void run_job(const std::string& job_id) {
    std::string session_id;
    {
      std::lock_guard guard(mu_);
      auto& job = jobs_.at(job_id);
      job.state = JobState::kRunning;
      session_id = job.session_id;
    }
    std::lock_guard lock(session_mu(session_id));
    StoredSession stored = store_.load_session(session_id);
    Session s = stored.session;
    try {
      const AudioClip clip = decode_wav(store_.read_artifact(stored, Artifact::kAudio), session_id);
      set_progress(job_id, 0.05);
      const Enrollment enrollment = stored.has(Artifact::kEnrollment) ? load_enrollment(stored) : Enrollment{};
      const AnalysisResult r = analyze(clip, *opts_.model, opts_.phones, opts_.config, enrollment,
                                       s.task == TaskKind::kReading,
                                       [&](double p) { set_progress(job_id, p); });
      ArtifactSet arts;
      arts[Artifact::kFeatures] = serialize_features(r.features);
      arts[Artifact::kAnalysis] = to_bytes(bundle_text(bundle_json(r, opts_.config)));
      if (r.speaker_model) arts[Artifact::kSpeakerModel] = serialize_speaker_model(*r.speaker_model);
      s.state = SessionState::kAnalyzed;
      store_.save_session(s, arts);
      finish_job(job_id, JobState::kDone, "");
    } catch (const std::exception& e) {
      s.state = SessionState::kFailed;
      s.error = e.what();
      try {
        store_.save_session(s);
      } catch (const std::exception&) {
        // Session stays in processing; the next start marks it failed.
      }
      finish_job(job_id, JobState::kFailed, e.what());
    }
  }

  void worker_loop() {
    for (;;) {
      std::string job_id;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_ && queue_.empty()) return;
        job_id = queue_.front();
        queue_.pop_front();
        ++running_;
      }
      run_job(job_id);
      {
        std::lock_guard lock(mu_);
        --running_;
      }
      idle_cv_.notify_all();
    }
  }

  ServiceOptions opts_;
  SessionStore store_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::map<std::string, AnalysisJob> jobs_;
  std::map<std::string, std::string> active_by_session_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mus_;
  std::map<std::string, std::vector<double>> chunks_;
  int running_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace stan
