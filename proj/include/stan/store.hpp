#pragma once

// On-device session store: one directory per session holding a JSON manifest
// and checksummed artifacts, plus a service-wide index. The index is only
// updated after a session's artifacts and manifest are fully on disk, so a
// listed session is always readable.
//
//   <root>/sessions/index.json
//   <root>/sessions/<id>/manifest.json, audio.wav, features.bin,
//                        analysis.json, speaker.model, enrollment.json

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stan/binary_io.hpp"
#include "stan/error.hpp"
#include "stan/features.hpp"
#include "stan/speaker.hpp"

namespace stan {

namespace fs = std::filesystem;

enum class TaskKind { kReading, kConversation };
enum class SessionState { kRecording, kProcessing, kAnalyzed, kFailed };

inline std::string_view task_name(TaskKind t) {
  return t == TaskKind::kReading ? "reading" : "conversation";
}

inline std::optional<TaskKind> parse_task(std::string_view s) {
  if (s == "reading") return TaskKind::kReading;
  if (s == "conversation") return TaskKind::kConversation;
  return std::nullopt;
}

inline std::string_view state_name(SessionState s) {
  switch (s) {
    case SessionState::kRecording: return "recording";
    case SessionState::kProcessing: return "processing";
    case SessionState::kAnalyzed: return "analyzed";
    case SessionState::kFailed: return "failed";
  }
  return "unknown";
}

inline std::optional<SessionState> parse_state(std::string_view s) {
  for (auto st : {SessionState::kRecording, SessionState::kProcessing, SessionState::kAnalyzed,
                  SessionState::kFailed})
    if (state_name(st) == s) return st;
  return std::nullopt;
}

/// recording -> processing -> (analyzed | failed); staying put is allowed.
inline bool valid_transition(SessionState from, SessionState to) {
  if (from == to) return true;
  switch (from) {
    case SessionState::kRecording: return to == SessionState::kProcessing;
    case SessionState::kProcessing: return to == SessionState::kAnalyzed || to == SessionState::kFailed;
    default: return false;
  }
}

struct Session {
  std::string id;
  std::int64_t created_at_ms = 0;
  TaskKind task = TaskKind::kConversation;
  std::optional<std::string> reading_text;
  SessionState state = SessionState::kRecording;
  std::string error;

  bool operator==(const Session&) const = default;
};

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// 128 random bits as 32 hex digits.
inline std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{[] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }()};
  std::lock_guard lock(mu);
  return to_hex64(rng()) + to_hex64(rng());
}

enum class Artifact { kAudio, kFeatures, kAnalysis, kSpeakerModel, kEnrollment };

inline std::string_view artifact_key(Artifact a) {
  switch (a) {
    case Artifact::kAudio: return "audio";
    case Artifact::kFeatures: return "features";
    case Artifact::kAnalysis: return "analysis";
    case Artifact::kSpeakerModel: return "speaker_model";
    case Artifact::kEnrollment: return "enrollment";
  }
  return "";
}

inline std::string_view artifact_file(Artifact a) {
  switch (a) {
    case Artifact::kAudio: return "audio.wav";
    case Artifact::kFeatures: return "features.bin";
    case Artifact::kAnalysis: return "analysis.json";
    case Artifact::kSpeakerModel: return "speaker.model";
    case Artifact::kEnrollment: return "enrollment.json";
  }
  return "";
}

inline constexpr Artifact kAllArtifacts[] = {Artifact::kAudio, Artifact::kFeatures, Artifact::kAnalysis,
                                             Artifact::kSpeakerModel, Artifact::kEnrollment};

using ArtifactSet = std::map<Artifact, Bytes>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

struct SessionFilter {
  std::optional<TaskKind> task;
  std::optional<SessionState> state;
  std::optional<std::int64_t> from_ms;  // inclusive
  std::optional<std::int64_t> to_ms;    // inclusive
};

struct ArtifactRecord {
  std::string file;
  std::uint64_t checksum = 0;
  std::uint64_t size = 0;
};

/// A loaded manifest; artifact bytes are read on demand.
struct StoredSession {
  Session session;
  std::map<Artifact, ArtifactRecord> artifacts;

  bool has(Artifact a) const { return artifacts.count(a) > 0; }
};

class SessionStore {
 public:
  /// Called at each durability step with a step name; throwing simulates a
  /// crash at that point.
  using FaultHook = std::function<void(std::string_view step)>;

  explicit SessionStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(sessions_dir(), ec);
    if (ec) fail(ErrorCode::kIo, "cannot create store at " + sessions_dir().string() + ": " + ec.message());
  }

  const fs::path& root() const { return root_; }
  fs::path sessions_dir() const { return root_ / "sessions"; }
  fs::path session_dir(const std::string& id) const { return sessions_dir() / id; }

  void set_fault_hook(FaultHook hook) { fault_ = std::move(hook); }

  /// Writes `artifacts` and the manifest for `session`, then updates the
  /// index. Artifacts not supplied keep their stored versions.
  std::string save_session(const Session& session, const ArtifactSet& artifacts = {}) {
    check_session(session);
    const fs::path dir = session_dir(session.id);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string());
    WriterLock lock(dir / ".lock");

    std::optional<StoredSession> existing;
    if (fs::exists(dir / "manifest.json")) existing = read_manifest(session.id);
    if (existing) {
      if (existing->session.created_at_ms != session.created_at_ms || existing->session.task != session.task) {
        fail(ErrorCode::kWriteConflict, "session identity changed for " + session.id);
      }
      if (!valid_transition(existing->session.state, session.state)) {
        fail(ErrorCode::kInvalidState, "illegal transition " + std::string(state_name(existing->session.state)) +
                                           " -> " + std::string(state_name(session.state)));
      }
    } else if (session.state != SessionState::kRecording && !artifacts.count(Artifact::kAudio)) {
      // A first save past recording must carry its audio.
      fail(ErrorCode::kInvalidState, "new session in state " + std::string(state_name(session.state)) + " lacks audio");
    }

    StoredSession next;
    next.session = session;
    if (existing) next.artifacts = existing->artifacts;

    for (const auto& [kind, bytes] : artifacts) {
      const fs::path tmp = dir / (std::string(artifact_file(kind)) + ".tmp");
      write_file_durable(tmp, bytes);
      hook("artifact:" + std::string(artifact_key(kind)));
    }

    // Drop replaced entries first so no manifest ever vouches for a file
    // whose bytes are being swapped.
    if (existing) {
      StoredSession interim = *existing;
      bool dropped = false;
      for (const auto& [kind, bytes] : artifacts) dropped |= interim.artifacts.erase(kind) > 0;
      if (dropped) {
        write_manifest(interim);
        hook("manifest:interim");
      }
    }

    for (const auto& [kind, bytes] : artifacts) {
      const std::string file(artifact_file(kind));
      fs::rename(dir / (file + ".tmp"), dir / file, ec);
      if (ec) fail(ErrorCode::kIo, "rename failed for " + file + ": " + ec.message());
      next.artifacts[kind] = {file, fnv1a64(bytes), bytes.size()};
      hook("rename:" + std::string(artifact_key(kind)));
    }

    write_manifest(next);
    hook("manifest");
    update_index(next.session);
    hook("index");
    return session.id;
  }

  /// Manifest plus checksum verification of every recorded artifact.
  StoredSession load_session(const std::string& id) const {
    if (!in_index(id)) fail(ErrorCode::kNotFound, "no session " + id);
    StoredSession s = read_manifest(id);
    for (const auto& [kind, rec] : s.artifacts) read_artifact(s, kind);
    return s;
  }

  /// Artifact bytes after checksum verification.
  Bytes read_artifact(const StoredSession& s, Artifact kind) const {
    const auto it = s.artifacts.find(kind);
    if (it == s.artifacts.end()) {
      fail(ErrorCode::kNotFound, "session " + s.session.id + " has no " + std::string(artifact_key(kind)));
    }
    Bytes bytes = read_file(session_dir(s.session.id) / it->second.file);
    if (bytes.size() != it->second.size || fnv1a64(bytes) != it->second.checksum) {
      fail(ErrorCode::kCorruptArtifact, "checksum mismatch for " + it->second.file + " in " + s.session.id);
    }
    return bytes;
  }

  nlohmann::json read_bundle(const StoredSession& s) const {
    const Bytes b = read_artifact(s, Artifact::kAnalysis);
    try {
      return nlohmann::json::parse(b.begin(), b.end());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kCorruptArtifact, std::string("analysis.json: ") + e.what());
    }
  }

  FeatureMatrix read_features(const StoredSession& s) const {
    return deserialize_features(read_artifact(s, Artifact::kFeatures));
  }

  /// Summaries sorted by created_at descending, ties by id ascending.
  std::vector<Session> list_sessions(const SessionFilter& filter = {}) const {
    std::vector<Session> out;
    for (const auto& s : read_index()) {
      if (filter.task && s.task != *filter.task) continue;
      if (filter.state && s.state != *filter.state) continue;
      if (filter.from_ms && s.created_at_ms < *filter.from_ms) continue;
      if (filter.to_ms && s.created_at_ms > *filter.to_ms) continue;
      out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
      if (a.created_at_ms != b.created_at_ms) return a.created_at_ms > b.created_at_ms;
      return a.id < b.id;
    });
    return out;
  }

  bool contains(const std::string& id) const { return in_index(id); }

  struct RepairReport {
    std::vector<std::string> restored;  // readable sessions added back to the index
    std::vector<std::string> skipped;   // directories with no readable manifest
  };

  /// Rebuilds the index from every directory whose manifest and artifacts
  /// verify, and clears stale locks and temp files. Run with no writers active.
  RepairReport repair() {
    RepairReport report;
    std::lock_guard guard(index_mu_);
    std::vector<Session> index;
    std::set<std::string> indexed;
    for (const auto& s : read_index_unlocked()) indexed.insert(s.id);
    for (const auto& entry : fs::directory_iterator(sessions_dir())) {
      if (!entry.is_directory()) continue;
      const std::string id = entry.path().filename().string();
      std::error_code ec;
      fs::remove(entry.path() / ".lock", ec);
      for (const auto& f : fs::directory_iterator(entry.path()))
        if (f.path().extension() == ".tmp") fs::remove(f.path(), ec);
      try {
        StoredSession s = read_manifest(id);
        for (const auto& [kind, rec] : s.artifacts) read_artifact(s, kind);
        index.push_back(s.session);
        if (!indexed.count(id)) report.restored.push_back(id);
      } catch (const Error&) {
        report.skipped.push_back(id);
      }
    }
    std::sort(index.begin(), index.end(), [](const Session& a, const Session& b) { return a.id < b.id; });
    write_index_unlocked(index);
    return report;
  }

  static nlohmann::json session_json(const Session& s) {
    return {{"id", s.id},
            {"created_at_ms", s.created_at_ms},
            {"task", task_name(s.task)},
            {"reading_text", s.reading_text ? nlohmann::json(*s.reading_text) : nlohmann::json()},
            {"state", state_name(s.state)},
            {"error", s.error}};
  }

  static Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
    const auto task = parse_task(j.at("task").get<std::string>());
    const auto state = parse_state(j.at("state").get<std::string>());
    if (!task || !state) fail(ErrorCode::kCorruptArtifact, "bad task or state in session record");
    s.task = *task;
    s.state = *state;
    if (!j.at("reading_text").is_null()) s.reading_text = j.at("reading_text").get<std::string>();
    s.error = j.value("error", "");
    return s;
  }

 private:
  class WriterLock {
   public:
    explicit WriterLock(fs::path path) : path_(std::move(path)) {
      fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd_ < 0) {
        if (errno == EEXIST) fail(ErrorCode::kWriteConflict, "session is being written: " + path_.parent_path().filename().string());
        fail(ErrorCode::kIo, "cannot lock " + path_.string() + ": " + std::strerror(errno));
      }
    }
    ~WriterLock() {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
    WriterLock(const WriterLock&) = delete;
    WriterLock& operator=(const WriterLock&) = delete;

   private:
    fs::path path_;
    int fd_ = -1;
  };

  static void check_session(const Session& s) {
    if (s.id.empty() || s.id.find_first_of("/\\.") != std::string::npos) {
      fail(ErrorCode::kInvalidState, "invalid session id '" + s.id + "'");
    }
    if ((s.task == TaskKind::kReading) != s.reading_text.has_value()) {
      fail(ErrorCode::kMissingReadingText, "reading text must be present exactly for reading tasks");
    }
  }

  void hook(const std::string& step) const {
    if (fault_) fault_(step);
  }

  static void write_file_durable(const fs::path& path, std::span<const std::uint8_t> bytes) {
    const int fd = ::open(path.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0644);
    if (fd < 0) fail(ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        ::close(fd);
        if (err == ENOSPC || err == EDQUOT) fail(ErrorCode::kStorageFull, "no space left writing " + path.string());
        fail(ErrorCode::kIo, "write failed for " + path.string() + ": " + std::strerror(err));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 && (errno == ENOSPC || errno == EDQUOT)) {
      ::close(fd);
      fail(ErrorCode::kStorageFull, "no space left syncing " + path.string());
    }
    ::close(fd);
  }

  static void replace_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    const fs::path tmp = path.string() + ".tmp";
    write_file_durable(tmp, bytes);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::kIo, "rename failed for " + path.string() + ": " + ec.message());
  }

  static Bytes read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::kCorruptArtifact, "missing file " + path.string());
    return Bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }

  void write_manifest(const StoredSession& s) const {
    nlohmann::json j = session_json(s.session);
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& [kind, rec] : s.artifacts) {
      arts[std::string(artifact_key(kind))] = {{"file", rec.file}, {"fnv1a64", to_hex64(rec.checksum)}, {"size", rec.size}};
    }
    j["artifacts"] = arts;
    j["manifest_version"] = 1;
    replace_file(session_dir(s.session.id) / "manifest.json", to_bytes(j.dump(1) + "\n"));
  }

  StoredSession read_manifest(const std::string& id) const {
    const Bytes raw = read_file(session_dir(id) / "manifest.json");
    try {
      const auto j = nlohmann::json::parse(raw.begin(), raw.end());
      StoredSession s;
      s.session = session_from_json(j);
      if (s.session.id != id) fail(ErrorCode::kCorruptArtifact, "manifest id mismatch in " + id);
      for (Artifact a : kAllArtifacts) {
        const std::string key(artifact_key(a));
        if (!j.at("artifacts").contains(key)) continue;
        const auto& rec = j.at("artifacts").at(key);
        const std::string hex = rec.at("fnv1a64").get<std::string>();
        if (hex.size() != 16 || hex.find_first_not_of("0123456789abcdef") != std::string::npos) {
          fail(ErrorCode::kCorruptArtifact, "malformed checksum for " + key + " in " + id);
        }
        s.artifacts[a] = {rec.at("file").get<std::string>(), std::stoull(hex, nullptr, 16),
                          rec.at("size").get<std::uint64_t>()};
        if (s.artifacts[a].file != artifact_file(a)) fail(ErrorCode::kCorruptArtifact, "unexpected file name in manifest");
      }
      return s;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kCorruptArtifact, "manifest for " + id + ": " + e.what());
    }
  }

  fs::path index_path() const { return sessions_dir() / "index.json"; }

  std::vector<Session> read_index() const {
    std::lock_guard guard(index_mu_);
    return read_index_unlocked();
  }

  std::vector<Session> read_index_unlocked() const {
    if (!fs::exists(index_path())) return {};
    const Bytes raw = read_file(index_path());
    try {
      const auto j = nlohmann::json::parse(raw.begin(), raw.end());
      std::vector<Session> out;
      for (const auto& e : j.at("sessions")) out.push_back(session_from_json(e));
      return out;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kCorruptArtifact, std::string("index.json: ") + e.what());
    }
  }

  void write_index_unlocked(const std::vector<Session>& sessions) const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sessions) arr.push_back(session_json(s));
    replace_file(index_path(), to_bytes(nlohmann::json{{"version", 1}, {"sessions", arr}}.dump(1) + "\n"));
  }

  void update_index(const Session& s) {
    std::lock_guard guard(index_mu_);
    auto sessions = read_index_unlocked();
    auto it = std::find_if(sessions.begin(), sessions.end(), [&](const Session& x) { return x.id == s.id; });
    if (it != sessions.end()) {
      *it = s;
    } else {
      sessions.push_back(s);
      std::sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) { return a.id < b.id; });
    }
    write_index_unlocked(sessions);
  }

  bool in_index(const std::string& id) const {
    const auto sessions = read_index();
    return std::any_of(sessions.begin(), sessions.end(), [&](const Session& s) { return s.id == id; });
  }

  fs::path root_;
  FaultHook fault_;
  mutable std::mutex index_mu_;
};

}  // namespace stan
