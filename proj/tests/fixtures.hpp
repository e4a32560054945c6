#pragma once

// Synthetic recordings and small helpers shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stan/audio.hpp"
#include "stan/binary_io.hpp"
#include "stan/features.hpp"
#include "stan/speaker.hpp"
#include "stan/vad.hpp"
#include "stan/synth.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "stan") {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / (tag + "-" + stan::to_hex64(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// RIFF/WAVE with interleaved int16 samples.
inline stan::Bytes wav_pcm16(const std::vector<std::int16_t>& interleaved, int channels, int rate) {
  stan::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  w.tag("RIFF");
  w.u32(36 + data_bytes);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(rate));
  w.u32(static_cast<std::uint32_t>(rate * channels * 2));
  w.u16(static_cast<std::uint16_t>(channels * 2));
  w.u16(16);
  w.tag("data");
  w.u32(data_bytes);
  for (auto s : interleaved) w.i16(s);
  return w.take();
}

/// RIFF/WAVE with interleaved float32 samples; `extensible` writes a
/// WAVE_FORMAT_EXTENSIBLE header with the float subformat.
inline stan::Bytes wav_float(const std::vector<float>& interleaved, int channels, int rate, bool extensible = false) {
  stan::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 4);
  const std::uint32_t fmt_size = extensible ? 40 : 16;
  w.tag("RIFF");
  w.u32(4 + (8 + fmt_size) + 8 + data_bytes);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(fmt_size);
  w.u16(extensible ? 0xFFFE : 3);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(rate));
  w.u32(static_cast<std::uint32_t>(rate * channels * 4));
  w.u16(static_cast<std::uint16_t>(channels * 4));
  w.u16(32);
  if (extensible) {
    w.u16(22);
    w.u16(32);
    w.u32(0);
    // KSDATAFORMAT_SUBTYPE_IEEE_FLOAT
    const std::uint8_t guid[16] = {0x03, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10, 0x00,
                                   0x80, 0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
    for (auto b : guid) w.u8(b);
  }
  w.tag("data");
  w.u32(data_bytes);
  for (float s : interleaved) w.f32(s);
  return w.take();
}

/// Header declaring a compressed codec (MPEG layer 3).
inline stan::Bytes wav_compressed() {
  stan::ByteWriter w;
  w.tag("RIFF");
  w.u32(4 + 24 + 8 + 4);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(0x0055);
  w.u16(1);
  w.u32(16000);
  w.u32(4000);
  w.u16(1);
  w.u16(0);
  w.tag("data");
  w.u32(4);
  w.u32(0);
  return w.take();
}

/// Ramp whose sample n has value n / 32768 (wrapping), exactly representable.
inline std::vector<double> ramp(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(static_cast<int>(i % 30000) - 15000) / 32768.0;
  return x;
}

struct Voice {
  double f0, f1, f2;
};

inline const Voice kTherapistVoice{105.0, 650.0, 1050.0};
inline const Voice kClientVoice{215.0, 330.0, 2350.0};

/// One utterance: a voiced sound with a syllable-rate envelope and slight f0 jitter.
inline std::vector<double> utterance(const Voice& v, double seconds, std::uint64_t seed, double amp = 0.3) {
  stan::synth::Noise n(seed);
  const double f0 = v.f0 * (1.0 + 0.02 * n.uniform());
  auto y = stan::synth::voiced(f0, v.f1, v.f2, seconds, amp);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = static_cast<double>(i) / stan::kCanonicalRate;
    y[i] *= 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * 4.0 * t);
  }
  return y;
}

struct LabeledSpan {
  double start_s, end_s;
  bool client;
};

struct Session {
  stan::AudioClip clip;
  std::vector<LabeledSpan> truth;
};

/// Alternating therapist/client turns separated by pauses over a quiet
/// noise floor. The first turn is the client's.
inline Session two_speaker_session(double seconds = 30.0, std::uint64_t seed = 7) {
  using namespace stan::synth;
  Noise rng(seed);
  std::vector<double> x;
  Session s;
  append(x, silence(0.5));
  bool client = true;
  std::uint64_t k = 0;
  while (true) {
    const double len = 1.2 + 1.2 * (0.5 * (rng.uniform() + 1.0));
    const double gap = 0.5 + 0.3 * (0.5 * (rng.uniform() + 1.0));
    const double start = static_cast<double>(x.size()) / stan::kCanonicalRate;
    if (start + len + gap > seconds) break;
    append(x, utterance(client ? kClientVoice : kTherapistVoice, len, seed * 1000 + k++));
    s.truth.push_back({start, start + len, client});
    append(x, silence(gap));
    client = !client;
  }
  x.resize(samples_for(seconds), 0.0);
  add_into(x, white(seconds, 1e-4, seed + 99));
  s.clip = make_clip(std::move(x));
  return s;
}

/// Several seconds of one voice with short pauses, for enrollment.
inline stan::AudioClip enrollment_clip(const Voice& v, double speech_s = 7.0, std::uint64_t seed = 3) {
  using namespace stan::synth;
  std::vector<double> x;
  append(x, silence(0.3));
  double done = 0.0;
  std::uint64_t k = 0;
  while (done < speech_s - 1e-9) {
    const double len = std::min(1.5, speech_s - done);
    append(x, utterance(v, len, seed * 100 + k++));
    append(x, silence(0.4));
    done += len;
  }
  add_into(x, white(static_cast<double>(x.size()) / stan::kCanonicalRate, 1e-4, seed + 5));
  return make_clip(std::move(x));
}

inline stan::Bytes wav_of(const stan::AudioClip& c) { return stan::encode_wav(c); }

inline double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

/// silence | utterance | silence plus white noise at exactly `snr_db` below
/// the utterance RMS.
inline std::vector<double> speech_in_noise(const Voice& v, double before, double speech, double after,
                                           double snr_db, std::uint64_t seed) {
  using namespace stan::synth;
  const auto u = utterance(v, speech, seed);
  std::vector<double> x;
  append(x, silence(before));
  append(x, u);
  append(x, silence(after));
  // Uniform noise on [-a, a] has RMS a / sqrt(3).
  const double a = std::sqrt(3.0) * rms(u) * std::pow(10.0, -snr_db / 20.0);
  add_into(x, white(static_cast<double>(x.size()) / stan::kCanonicalRate, a, seed + 1));
  return x;
}

/// Enrollment embeddings the way the service computes them.
inline std::vector<stan::SpeakerEmbedding> enrollment_embeddings_of(const stan::AudioClip& clip) {
  auto fm = stan::compute_features(clip);
  stan::quantize_to_f32(fm);
  return stan::enrollment_embeddings(fm, stan::detect_speech(fm.log_energy, fm.hop_s));
}

}  // namespace fixtures
