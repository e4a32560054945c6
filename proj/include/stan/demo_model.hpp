#pragma once

// A reference acoustic model trained on synthetic phone-like sounds. It lets
// the service run end to end without a site-specific model file; it is not a
// speech recognizer.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stan/features.hpp"
#include "stan/phones.hpp"
#include "stan/synth.hpp"

namespace stan {

namespace detail {

struct Formants {
  double f1, f2;
};

inline const std::map<std::string, Formants>& demo_formants() {
  static const std::map<std::string, Formants> table = {
      {"iy", {270, 2290}}, {"ih", {390, 1990}}, {"eh", {530, 1840}}, {"ae", {660, 1720}},
      {"aa", {730, 1090}}, {"ao", {570, 840}},  {"uh", {440, 1020}}, {"uw", {300, 870}},
      {"ah", {520, 1190}}, {"er", {490, 1350}}, {"ey", {400, 2100}}, {"ay", {650, 1500}},
      {"aw", {650, 1100}}, {"ow", {450, 900}},  {"oy", {500, 1200}}, {"l", {360, 1300}},
      {"r", {420, 1250}},  {"w", {300, 700}},   {"y", {280, 2200}},  {"m", {250, 1100}},
      {"n", {250, 1600}},  {"ng", {250, 2000}},
  };
  return table;
}

// Frication/burst centre frequency per obstruent.
inline const std::map<std::string, double>& demo_noise_centres() {
  static const std::map<std::string, double> table = {
      {"s", 6000}, {"z", 6000}, {"sh", 3000}, {"zh", 3000}, {"f", 5000}, {"v", 5000},
      {"th", 5500}, {"dh", 5500}, {"hh", 1500}, {"p", 800}, {"b", 700}, {"t", 4000},
      {"d", 3500}, {"k", 2000}, {"g", 1800}, {"ch", 3200}, {"jh", 2800},
  };
  return table;
}

inline bool demo_is_voiced(const std::string& p) {
  return p == "z" || p == "zh" || p == "v" || p == "dh" || p == "b" || p == "d" || p == "g" || p == "jh";
}

}  // namespace detail

/// One second of a stationary phone-like signal. Unknown phones fall back to a
/// category default.
inline std::vector<double> demo_phone_signal(const std::string& phone, Category cat, std::uint64_t seed,
                                             double seconds = 1.0) {
  using namespace synth;
  const auto& formants = detail::demo_formants();
  const auto& centres = detail::demo_noise_centres();
  switch (cat) {
    case Category::kSilence: {
      // Span digital silence up to a quiet room so every pause decodes as sil.
      std::vector<double> out;
      const double q = seconds / 4.0;
      append(out, silence(q));
      append(out, white(q, 1e-5, seed));
      append(out, white(q, 1e-4, seed + 1));
      append(out, white(seconds - 3 * q, 1e-3, seed + 2));
      return out;
    }
    case Category::kVowel:
    case Category::kApproximant:
    case Category::kNasal: {
      const auto it = formants.find(phone);
      const detail::Formants f = it != formants.end() ? it->second : detail::Formants{500, 1500};
      const double amp = cat == Category::kVowel ? 0.4 : cat == Category::kApproximant ? 0.25 : 0.15;
      auto y = voiced(130.0, f.f1, f.f2, seconds, amp);
      add_into(y, white(seconds, amp * 0.02, seed));
      return y;
    }
    case Category::kFricative: {
      const auto it = centres.find(phone);
      const double fc = it != centres.end() ? it->second : 4000.0;
      auto y = resonate(white(seconds, 1.0, seed), fc, fc * 0.4);
      normalize_peak(y, 0.12);
      if (detail::demo_is_voiced(phone)) add_into(y, voiced(130.0, 300.0, 1200.0, seconds, 0.08));
      return y;
    }
    case Category::kPlosive:
    case Category::kAffricate: {
      const auto it = centres.find(phone);
      const double fc = it != centres.end() ? it->second : 2000.0;
      const double burst_s = cat == Category::kPlosive ? 0.02 : 0.08;
      std::vector<double> out;
      std::uint64_t s = seed;
      while (out.size() < samples_for(seconds)) {
        auto burst = resonate(white(burst_s, 1.0, s++), fc, fc * 0.5);
        normalize_peak(burst, 0.3);
        if (detail::demo_is_voiced(phone)) add_into(burst, voiced(130.0, 300.0, 1000.0, burst_s, 0.1));
        append(out, burst);
        append(out, white(0.06, 1e-4, s++));
      }
      out.resize(samples_for(seconds));
      return out;
    }
  }
  return silence(seconds);
}

/// Trains the reference Gaussian model on one synthetic second per phone.
inline GaussianModel make_demo_model(const PhoneSet& set = PhoneSet::english()) {
  TrainingSet data;
  data.dim = 13;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto clip = synth::make_clip(demo_phone_signal(set.phone(i), set.category(i), 1000 + 17 * i));
    const auto fm = compute_features(clip);
    for (std::size_t k = 0; k < fm.rows(); ++k) data.add(fm.row(k), i);
  }
  return train_reference_model(data, set);
}

/// Shared instance for the English set; built once.
inline const GaussianModel& demo_model() {
  static const GaussianModel model = make_demo_model();
  return model;
}

}  // namespace stan
