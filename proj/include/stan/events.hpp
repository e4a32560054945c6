#pragma once

// Rule-based markers for potential stutters (prolongations, repetitions,
// blocks) over decoded client phone segments. All thresholds are tunable.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "stan/phones.hpp"

namespace stan {

enum class EventKind : std::uint8_t { kProlongation, kRepetition, kBlock };

inline std::string_view kind_name(EventKind k) {
  switch (k) {
    case EventKind::kProlongation: return "prolongation";
    case EventKind::kRepetition: return "repetition";
    case EventKind::kBlock: return "block";
  }
  return "unknown";
}

/// What the UI shows when a marker is inspected.
struct Evidence {
  std::vector<std::string> phones;
  std::map<std::string, double> values;

  bool operator==(const Evidence&) const = default;
};

struct StutterEvent {
  EventKind kind = EventKind::kProlongation;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;
  Evidence evidence;

  bool operator==(const StutterEvent&) const = default;
};

struct EventConfig {
  double prolongation_ratio = 3.0;
  double prolongation_min_s = 0.30;
  double prolongation_score_ratio = 6.0;
  std::size_t median_min_occurrences = 3;

  double repetition_max_gap_s = 0.15;
  std::size_t repetition_min_count = 2;
  double repetition_score_div = 3.0;

  double block_min_s = 0.5;
  double block_max_s = 3.0;
  double block_score_div = 2.0;
};

struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;
};

namespace detail {

inline constexpr double kTimeEps = 1e-9;

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline bool is_silence(const PhoneSegment& s) { return s.phone == kSilencePhone; }

}  // namespace detail

/// Flags phones held at least `prolongation_ratio` times their session median
/// (category median when the phone occurs fewer than 3 times) and at least
/// `prolongation_min_s` long.
inline std::vector<StutterEvent> detect_prolongations(const std::vector<PhoneSegment>& phones,
                                                      const PhoneSet& set, const EventConfig& cfg = {}) {
  std::map<std::string, std::vector<double>> by_phone;
  std::map<Category, std::vector<double>> by_category;
  for (const auto& s : phones) {
    if (detail::is_silence(s)) continue;
    by_phone[s.phone].push_back(s.duration_s());
    if (auto c = set.category_of(s.phone)) by_category[*c].push_back(s.duration_s());
  }
  std::map<std::string, double> phone_median;
  std::map<Category, double> category_median;
  for (const auto& [p, d] : by_phone) phone_median[p] = detail::median(d);
  for (const auto& [c, d] : by_category) category_median[c] = detail::median(d);

  std::vector<StutterEvent> out;
  for (const auto& s : phones) {
    if (detail::is_silence(s)) continue;
    const auto cat = set.category_of(s.phone);
    const bool use_phone = by_phone[s.phone].size() >= cfg.median_min_occurrences || !cat;
    const double med = use_phone ? phone_median[s.phone] : category_median[*cat];
    const double d = s.duration_s();
    if (med <= 0.0) continue;
    const double ratio = d / med;
    if (d + detail::kTimeEps < cfg.prolongation_ratio * med) continue;
    if (d + detail::kTimeEps < cfg.prolongation_min_s) continue;
    StutterEvent e;
    e.kind = EventKind::kProlongation;
    e.start_s = s.start_s;
    e.end_s = s.end_s;
    e.score = std::min(1.0, d / (cfg.prolongation_score_ratio * med));
    e.evidence.phones = {s.phone};
    e.evidence.values = {{"duration_s", d},
                         {"median_s", med},
                         {"ratio", ratio},
                         {"category_median", use_phone ? 0.0 : 1.0}};
    out.push_back(std::move(e));
  }
  return out;
}

/// Runs of k >= 2 consecutive identical unigrams or bigrams of non-silence
/// phones, separated only by silences shorter than `repetition_max_gap_s`.
inline std::vector<StutterEvent> detect_repetitions(const std::vector<PhoneSegment>& phones,
                                                    const EventConfig& cfg = {}) {
  std::vector<const PhoneSegment*> tok;
  for (const auto& s : phones)
    if (!detail::is_silence(s)) tok.push_back(&s);
  const std::size_t n = tok.size();
  // Silence between token i-1 and token i.
  auto gap_ok = [&](std::size_t i) {
    return tok[i]->start_s - tok[i - 1]->end_s + detail::kTimeEps < cfg.repetition_max_gap_s;
  };
  auto emit = [&](std::size_t first, std::size_t last, std::vector<std::string> unit, std::size_t k) {
    StutterEvent e;
    e.kind = EventKind::kRepetition;
    e.start_s = tok[first]->start_s;
    e.end_s = tok[last]->end_s;
    e.score = std::min(1.0, static_cast<double>(k - 1) / cfg.repetition_score_div);
    e.evidence.phones = std::move(unit);
    e.evidence.values = {{"count", static_cast<double>(k)}};
    return e;
  };

  std::vector<StutterEvent> out;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && tok[j + 1]->phone == tok[i]->phone && gap_ok(j + 1)) ++j;
    if (j - i + 1 >= cfg.repetition_min_count && j > i) {
      out.push_back(emit(i, j, {tok[i]->phone}, j - i + 1));
      i = j + 1;
      continue;
    }
    if (i + 1 < n && tok[i]->phone != tok[i + 1]->phone && gap_ok(i + 1)) {
      std::size_t k = 1, m = i + 2;
      while (m + 1 < n && tok[m]->phone == tok[i]->phone && tok[m + 1]->phone == tok[i + 1]->phone &&
             gap_ok(m) && gap_ok(m + 1)) {
        ++k;
        m += 2;
      }
      if (k >= cfg.repetition_min_count && k >= 2) {
        out.push_back(emit(i, m - 1, {tok[i]->phone, tok[i + 1]->phone}, k));
        i = m;
        continue;
      }
    }
    ++i;
  }
  return out;
}

/// Silences inside a client turn, with speech on both sides in that turn,
/// lasting between `block_min_s` and `block_max_s`.
inline std::vector<StutterEvent> detect_blocks(const std::vector<PhoneSegment>& phones,
                                               const std::vector<TimeInterval>& client_turns,
                                               const EventConfig& cfg = {}) {
  std::vector<StutterEvent> out;
  for (std::size_t i = 1; i + 1 < phones.size(); ++i) {
    const auto& s = phones[i];
    if (!detail::is_silence(s)) continue;
    const auto& before = phones[i - 1];
    const auto& after = phones[i + 1];
    if (detail::is_silence(before) || detail::is_silence(after)) continue;
    const double d = s.duration_s();
    if (d + detail::kTimeEps < cfg.block_min_s || d > cfg.block_max_s + detail::kTimeEps) continue;
    const bool inside = std::any_of(client_turns.begin(), client_turns.end(), [&](const TimeInterval& t) {
      return t.start_s <= s.start_s + detail::kTimeEps && s.end_s <= t.end_s + detail::kTimeEps &&
             before.end_s > t.start_s + detail::kTimeEps && after.start_s + detail::kTimeEps < t.end_s;
    });
    if (!inside) continue;
    StutterEvent e;
    e.kind = EventKind::kBlock;
    e.start_s = s.start_s;
    e.end_s = s.end_s;
    e.score = std::min(1.0, d / cfg.block_score_div);
    e.evidence.phones = {before.phone, after.phone};
    e.evidence.values = {{"duration_s", d}};
    out.push_back(std::move(e));
  }
  return out;
}

/// Sorts by (start, kind) and merges overlapping events of the same kind,
/// keeping the highest score and that event's evidence.
inline std::vector<StutterEvent> merge_events(std::vector<StutterEvent> events) {
  auto key = [](const StutterEvent& e) { return std::make_tuple(e.start_s, e.kind, e.end_s, -e.score); };
  std::stable_sort(events.begin(), events.end(),
                   [&](const StutterEvent& a, const StutterEvent& b) { return key(a) < key(b); });

  std::vector<StutterEvent> out;
  std::map<EventKind, std::size_t> open;  // kind -> index in out of the latest event
  for (auto& e : events) {
    auto it = open.find(e.kind);
    if (it != open.end() && e.start_s < out[it->second].end_s) {
      StutterEvent& cur = out[it->second];
      const double count_a = cur.evidence.values.count("merged_count") ? cur.evidence.values["merged_count"] : 1.0;
      const double count_b = e.evidence.values.count("merged_count") ? e.evidence.values["merged_count"] : 1.0;
      cur.end_s = std::max(cur.end_s, e.end_s);
      if (e.score > cur.score) {
        cur.score = e.score;
        cur.evidence = std::move(e.evidence);
      }
      cur.evidence.values["merged_count"] = count_a + count_b;
      continue;
    }
    open[e.kind] = out.size();
    out.push_back(std::move(e));
  }
  return out;
}

/// All detectors over the decoded phones of each client turn. Repetitions do
/// not span turns; prolongation medians are session-wide.
inline std::vector<StutterEvent> detect_events(const std::vector<std::vector<PhoneSegment>>& per_turn,
                                               const std::vector<TimeInterval>& client_turns,
                                               const PhoneSet& set, const EventConfig& cfg = {}) {
  std::vector<PhoneSegment> all;
  for (const auto& t : per_turn) all.insert(all.end(), t.begin(), t.end());
  std::vector<StutterEvent> events = detect_prolongations(all, set, cfg);
  for (const auto& t : per_turn) {
    auto reps = detect_repetitions(t, cfg);
    events.insert(events.end(), reps.begin(), reps.end());
  }
  auto blocks = detect_blocks(all, client_turns, cfg);
  events.insert(events.end(), blocks.begin(), blocks.end());
  return merge_events(std::move(events));
}

}  // namespace stan
