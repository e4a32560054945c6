#pragma once

// Analysis configuration: every tunable threshold, loadable from a
// TOML-style key/value file and snapshotted into each analysis bundle.

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "stan/error.hpp"
#include "stan/events.hpp"
#include "stan/pitch.hpp"
#include "stan/speaker.hpp"
#include "stan/vad.hpp"

namespace stan {

struct AnalysisConfig {
  VadConfig vad;
  PitchConfig pitch;
  EventConfig events;
  SpeakerTrainingConfig speaker;
  double enroll_min_speech_s = 5.0;
  double enroll_chunk_s = 1.0;
  std::size_t decoder_min_frames = 3;
  int workers = 2;

  /// Calls fn(section.key, field) for every tunable.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    auto& [vad, pitch, events, speaker, enroll_min_speech_s, enroll_chunk_s, decoder_min_frames,
           workers] = self;
    fn("vad.percentile", vad.percentile);
    fn("vad.margin", vad.margin);
    fn("vad.gap_close_s", vad.gap_close_s);
    fn("vad.min_segment_s", vad.min_segment_s);
    fn("pitch.f0_min_hz", pitch.f0_min_hz);
    fn("pitch.f0_max_hz", pitch.f0_max_hz);
    fn("pitch.voicing_threshold", pitch.voicing_threshold);
    fn("pitch.octave_ratio", pitch.octave_ratio);
    fn("events.prolongation_ratio", events.prolongation_ratio);
    fn("events.prolongation_min_s", events.prolongation_min_s);
    fn("events.prolongation_score_ratio", events.prolongation_score_ratio);
    fn("events.median_min_occurrences", events.median_min_occurrences);
    fn("events.repetition_max_gap_s", events.repetition_max_gap_s);
    fn("events.repetition_min_count", events.repetition_min_count);
    fn("events.repetition_score_div", events.repetition_score_div);
    fn("events.block_min_s", events.block_min_s);
    fn("events.block_max_s", events.block_max_s);
    fn("events.block_score_div", events.block_score_div);
    fn("speaker.c", speaker.c);
    fn("speaker.max_iterations", speaker.max_iterations);
    fn("speaker.tolerance", speaker.tolerance);
    fn("speaker.seed", speaker.seed);
    fn("speaker.enroll_min_speech_s", enroll_min_speech_s);
    fn("speaker.enroll_chunk_s", enroll_chunk_s);
    fn("decoder.min_frames", decoder_min_frames);
    fn("service.workers", workers);
  }

  /// Sets one key from its textual value.
  void set(std::string_view key, std::string_view value) {
    bool found = false;
    visit(*this, [&](std::string_view k, auto& field) {
      if (k != key) return;
      found = true;
      assign(field, key, value);
    });
    if (!found) fail(ErrorCode::kInvalidConfig, "unknown config key '" + std::string(key) + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    visit(*this, [&](std::string_view k, const auto& field) { j[std::string(k)] = field; });
    return j;
  }

 private:
  template <typename T>
  static void assign(T& field, std::string_view key, std::string_view value) {
    const std::string v(value);
    char* end = nullptr;
    if constexpr (std::is_floating_point_v<T>) {
      const double d = std::strtod(v.c_str(), &end);
      if (end == v.c_str() || *end != '\0') bad(key, value);
      field = d;
    } else {
      const long long i = std::strtoll(v.c_str(), &end, 10);
      if (end == v.c_str() || *end != '\0' || i < 0) bad(key, value);
      field = static_cast<T>(i);
    }
  }

  [[noreturn]] static void bad(std::string_view key, std::string_view value) {
    fail(ErrorCode::kInvalidConfig,
         "invalid value '" + std::string(value) + "' for '" + std::string(key) + "'");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

/// Parses `[section]` headers and `key = value` lines; '#' comments.
inline AnalysisConfig parse_config(std::string_view text, AnalysisConfig cfg = {}) {
  std::istringstream in{std::string(text)};
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(ErrorCode::kInvalidConfig, "line " + std::to_string(line_no) + ": bad section");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kInvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

inline AnalysisConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::kIo, "cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Applies STAN_<SECTION>_<KEY> overrides, e.g. STAN_EVENTS_BLOCK_MIN_S.
inline void apply_env_overrides(AnalysisConfig& cfg,
                                const std::function<const char*(const char*)>& getenv_fn = std::getenv) {
  std::map<std::string, std::string> pending;
  AnalysisConfig::visit(cfg, [&](std::string_view key, auto&) {
    std::string name = "STAN_";
    for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = getenv_fn(name.c_str())) pending[std::string(key)] = v;
  });
  for (const auto& [k, v] : pending) cfg.set(k, v);
}

}  // namespace stan
