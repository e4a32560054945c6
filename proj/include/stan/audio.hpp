#pragma once

// Canonical audio representation: RIFF/PCM decoding and encoding,
// band-limited resampling, and pre-emphasized, windowed framing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stan/binary_io.hpp"
#include "stan/error.hpp"

namespace stan {

inline constexpr int kCanonicalRate = 16000;

/// Mono samples in [-1, 1] plus timing metadata.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;
  std::string source_id;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

namespace detail {

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Parses a RIFF/WAVE container holding 16-bit PCM or 32-bit float samples.
/// Channels are averaged to mono; 16-bit values are scaled by 1/32768.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id = {}) {
  ByteReader in(bytes, ErrorCode::kMalformedContainer);
  if (bytes.size() < 12) fail(ErrorCode::kMalformedContainer, "file shorter than RIFF header");
  if (in.tag() != "RIFF") fail(ErrorCode::kMalformedContainer, "missing RIFF tag");
  in.u32();  // riff size; unreliable in streamed files, chunk walk is authoritative
  if (in.tag() != "WAVE") fail(ErrorCode::kMalformedContainer, "missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  while (in.remaining() >= 8) {
    const std::string id = in.tag();
    const std::uint32_t size = in.u32();
    if (size > in.remaining()) {
      fail(ErrorCode::kMalformedContainer, "chunk '" + id + "' truncated");
    }
    auto body = in.take(size);
    if (size % 2 == 1 && in.remaining() > 0) in.skip(1);

    if (id == "fmt ") {
      if (size < 16) fail(ErrorCode::kMalformedContainer, "fmt chunk too small");
      ByteReader f(body, ErrorCode::kMalformedContainer);
      format = f.u16();
      channels = f.u16();
      rate = f.u32();
      f.u32();  // byte rate
      block_align = f.u16();
      bits = f.u16();
      if (format == detail::kFormatExtensible) {
        if (size < 40) fail(ErrorCode::kMalformedContainer, "extensible fmt chunk too small");
        f.u16();  // cb size
        f.u16();  // valid bits
        f.u32();  // channel mask
        format = f.u16();  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data = body;
      have_data = true;
    }
  }

  if (!have_fmt) fail(ErrorCode::kMalformedContainer, "missing fmt chunk");
  if (!have_data) fail(ErrorCode::kMalformedContainer, "missing data chunk");
  const bool pcm16 = format == detail::kFormatPcm && bits == 16;
  const bool float32 = format == detail::kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    fail(ErrorCode::kUnsupportedEncoding,
         "unsupported encoding: format " + std::to_string(format) + ", " +
             std::to_string(bits) + " bits");
  }
  if (channels == 0 || rate == 0 || block_align != channels * (bits / 8)) {
    fail(ErrorCode::kMalformedContainer, "inconsistent fmt chunk");
  }
  if (data.size() % block_align != 0) {
    fail(ErrorCode::kMalformedContainer, "data chunk is not a whole number of frames");
  }

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = std::move(source_id);
  const std::size_t n = data.size() / block_align;
  clip.samples.resize(n);
  ByteReader d(data, ErrorCode::kMalformedContainer);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      if (pcm16) {
        acc += static_cast<double>(d.i16()) / 32768.0;
      } else {
        const double v = d.f32();
        acc += std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

/// Quantizes one amplitude to 16-bit PCM (inverse of the 1/32768 scale).
inline std::int16_t to_pcm16(double x) {
  const double v = std::nearbyint(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

/// Encodes a clip as 16-bit mono PCM at its own sample rate.
inline Bytes encode_wav(std::span<const double> samples, int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  ByteWriter w;
  w.tag("RIFF");
  w.u32(36 + data_bytes);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(16);
  w.u16(detail::kFormatPcm);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(sample_rate));
  w.u32(static_cast<std::uint32_t>(sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.tag("data");
  w.u32(data_bytes);
  for (double x : samples) w.i16(to_pcm16(x));
  return w.take();
}

inline Bytes encode_wav(const AudioClip& clip) {
  return encode_wav(clip.samples, clip.sample_rate);
}

inline bool is_supported_target_rate(int rate) {
  return rate == 8000 || rate == 16000 || rate == 44100 || rate == 48000;
}

namespace detail {

// Zeroth-order modified Bessel function of the first kind (power series).
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

struct SincKernel {
  static constexpr double kZeroCrossings = 64.0;
  static constexpr double kRolloff = 0.95;
  static constexpr double kBeta = 8.6;

  double scale;       // min(1, out/in)
  double half_width;  // support radius in input samples
  double inv_i0_beta;

  explicit SincKernel(double s)
      : scale(s), half_width(kZeroCrossings / s), inv_i0_beta(1.0 / bessel_i0(kBeta)) {}

  double operator()(double t) const {
    if (std::abs(t) >= half_width) return 0.0;
    const double fc = scale * kRolloff;
    const double x = fc * t;
    const double sinc =
        x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = t / half_width;
    const double win = bessel_i0(kBeta * std::sqrt(1.0 - r * r)) * inv_i0_beta;
    return fc * sinc * win;
  }
};

}  // namespace detail

/// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
/// Output length is round(N * target / source).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (!is_supported_target_rate(target_rate)) {
    fail(ErrorCode::kUnsupportedRate, "unsupported target rate " + std::to_string(target_rate));
  }
  if (clip.sample_rate <= 0) fail(ErrorCode::kUnsupportedRate, "invalid source rate");
  if (clip.sample_rate == target_rate) return clip;

  const auto in_rate = static_cast<std::int64_t>(clip.sample_rate);
  const auto out_rate = static_cast<std::int64_t>(target_rate);
  const std::int64_t g = std::gcd(in_rate, out_rate);
  const std::int64_t in_step = in_rate / g;
  const std::int64_t out_step = out_rate / g;

  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out = (n_in * out_rate + in_rate / 2) / in_rate;

  const detail::SincKernel kernel(std::min(1.0, static_cast<double>(out_rate) / in_rate));
  const auto reach = static_cast<std::int64_t>(std::ceil(kernel.half_width));
  const std::int64_t taps = 2 * reach;

  // One tap row per fractional phase; phases repeat every out_step outputs.
  constexpr std::int64_t kMaxTablePhases = 4096;
  const bool tabulate = out_step <= kMaxTablePhases;
  std::vector<double> table;
  auto tap_weight = [&](std::int64_t phase, std::int64_t tap) {
    const double frac = static_cast<double>(phase) / static_cast<double>(out_step);
    return kernel(frac + static_cast<double>(reach - 1 - tap));
  };
  if (tabulate) {
    table.resize(static_cast<std::size_t>(out_step * taps));
    for (std::int64_t p = 0; p < out_step; ++p)
      for (std::int64_t j = 0; j < taps; ++j)
        table[static_cast<std::size_t>(p * taps + j)] = tap_weight(p, j);
  }

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(static_cast<std::size_t>(n_out));
  const double* x = clip.samples.data();
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = n * in_step;
    const std::int64_t base = pos / out_step;
    const std::int64_t phase = pos % out_step;
    // tap j reads input sample base - reach + 1 + j
    const std::int64_t first = base - reach + 1;
    const std::int64_t lo = std::max<std::int64_t>(0, -first);
    const std::int64_t hi = std::min<std::int64_t>(taps, n_in - first);
    double acc = 0.0;
    if (tabulate) {
      const double* row = table.data() + phase * taps;
      for (std::int64_t j = lo; j < hi; ++j) acc += row[j] * x[first + j];
    } else {
      for (std::int64_t j = lo; j < hi; ++j) acc += tap_weight(phase, j) * x[first + j];
    }
    out.samples[static_cast<std::size_t>(n)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

/// Framing parameters. Defaults: 25 ms Hamming frames every 10 ms, pre-emphasis 0.97.
struct FrameGrid {
  int frame_length = 400;
  int hop = 160;
  double pre_emphasis = 0.97;
  std::vector<double> window;

  FrameGrid() : FrameGrid(400, 160, 0.97) {}

  FrameGrid(int length, int hop_samples, double pre_emph)
      : frame_length(length), hop(hop_samples), pre_emphasis(pre_emph) {
    if (length <= 1 || hop_samples <= 0 || hop_samples > length) {
      fail(ErrorCode::kInvalidConfig, "frame grid requires 0 < hop <= frame_length");
    }
    window.resize(static_cast<std::size_t>(length));
    for (int n = 0; n < length; ++n) {
      window[static_cast<std::size_t>(n)] =
          0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
    }
  }

  double hop_s(int rate = kCanonicalRate) const { return static_cast<double>(hop) / rate; }
  double frame_s(int rate = kCanonicalRate) const {
    return static_cast<double>(frame_length) / rate;
  }

  std::size_t frame_count(std::size_t n_samples) const {
    const auto len = static_cast<std::size_t>(frame_length);
    if (n_samples < len) return 0;
    return (n_samples - len) / static_cast<std::size_t>(hop) + 1;
  }
};

/// Row-major block of equal-length frames.
struct Frames {
  std::size_t frame_length = 0;
  std::vector<double> data;

  std::size_t size() const { return frame_length == 0 ? 0 : data.size() / frame_length; }
  bool empty() const { return size() == 0; }
  std::span<const double> operator[](std::size_t k) const {
    return {data.data() + k * frame_length, frame_length};
  }
  std::span<double> operator[](std::size_t k) {
    return {data.data() + k * frame_length, frame_length};
  }
};

/// Applies y[n] = x[n] - a*x[n-1] over the clip, then cuts and windows frames.
/// Frame k covers samples [k*hop, k*hop + frame_length).
inline Frames frame_signal(const AudioClip& clip, const FrameGrid& grid) {
  if (clip.sample_rate != kCanonicalRate) {
    fail(ErrorCode::kUnsupportedRate, "framing expects canonical-rate audio");
  }
  Frames frames;
  frames.frame_length = static_cast<std::size_t>(grid.frame_length);
  const std::size_t count = grid.frame_count(clip.samples.size());
  frames.data.resize(count * frames.frame_length);
  const auto& x = clip.samples;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * static_cast<std::size_t>(grid.hop);
    auto out = frames[k];
    for (std::size_t i = 0; i < frames.frame_length; ++i) {
      const std::size_t n = start + i;
      const double y = n == 0 ? x[0] : x[n] - grid.pre_emphasis * x[n - 1];
      out[i] = y * grid.window[i];
    }
  }
  return frames;
}

/// Converts seconds to a sample index, rounding to the nearest sample.
inline std::size_t sample_index(double t_s, int rate) {
  return static_cast<std::size_t>(std::llround(t_s * rate));
}

}  // namespace stan
