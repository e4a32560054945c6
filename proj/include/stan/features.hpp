#pragma once

// Spectral front end: power spectrum, mel filterbank, MFCC and log energy,
// plus the binary feature-matrix format.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "stan/audio.hpp"
#include "stan/binary_io.hpp"
#include "stan/error.hpp"

namespace stan {

inline constexpr double kLogFloor = 1e-10;

/// Iterative radix-2 FFT for a fixed power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n) {
    if (n < 2 || (n & (n - 1)) != 0) fail(ErrorCode::kInvalidConfig, "FFT size must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  void transform(std::vector<std::complex<double>>& x) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (bitrev_[i] > i) std::swap(x[i], x[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t s = 0; s < n_; s += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto t = twiddle_[j * stride] * x[s + j + half];
          const auto u = x[s + j];
          x[s + j] = u + t;
          x[s + j + half] = u - t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

/// Per-frame power spectra over bins 0..fft_size/2.
struct SpectrogramSlice {
  std::size_t fft_size = 512;
  double bin_hz = 31.25;
  double start_s = 0.0;
  double end_s = 0.0;
  double hop_s = 0.01;
  std::vector<double> power;  // row-major, n_frames x n_bins

  std::size_t n_bins() const { return fft_size / 2 + 1; }
  std::size_t n_frames() const { return power.size() / n_bins(); }
  std::span<const double> frame(std::size_t k) const {
    return {power.data() + k * n_bins(), n_bins()};
  }
};

/// |DFT|^2 of each (zero-padded) frame.
inline SpectrogramSlice power_spectrum(const Frames& frames, std::size_t fft_size = 512,
                                       int sample_rate = kCanonicalRate) {
  if (frames.frame_length > fft_size) {
    fail(ErrorCode::kDimensionMismatch, "frame longer than FFT size");
  }
  const Fft fft(fft_size);
  SpectrogramSlice spec;
  spec.fft_size = fft_size;
  spec.bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  const std::size_t bins = spec.n_bins();
  spec.power.resize(frames.size() * bins);
  std::vector<std::complex<double>> buf(fft_size);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto f = frames[k];
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < f.size(); ++i) buf[i] = f[i];
    fft.transform(buf);
    double* row = spec.power.data() + k * bins;
    for (std::size_t b = 0; b < bins; ++b) row[b] = std::norm(buf[b]);
  }
  return spec;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters uniformly spaced on the mel scale, evaluated at the
/// exact bin frequencies.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_filters = 26, std::size_t fft_size = 512,
                int sample_rate = kCanonicalRate, double f_lo = 0.0, double f_hi = 8000.0)
      : n_filters_(n_filters), n_bins_(fft_size / 2 + 1) {
    if (n_filters == 0 || f_hi <= f_lo || f_hi > sample_rate / 2.0) {
      fail(ErrorCode::kInvalidConfig, "invalid mel filterbank range");
    }
    const double m_lo = hz_to_mel(f_lo);
    const double m_hi = hz_to_mel(f_hi);
    std::vector<double> edges(n_filters + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_filters + 1));
    }
    centers_hz_.assign(edges.begin() + 1, edges.end() - 1);
    weights_.assign(n_filters * n_bins_, 0.0);
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
    for (std::size_t m = 0; m < n_filters; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (std::size_t b = 0; b < n_bins_; ++b) {
        const double f = static_cast<double>(b) * bin_hz;
        double w = 0.0;
        if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
        else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
        weights_[m * n_bins_ + b] = w;
      }
    }
  }

  std::size_t n_filters() const { return n_filters_; }
  std::size_t n_bins() const { return n_bins_; }
  const std::vector<double>& centers_hz() const { return centers_hz_; }
  std::span<const double> filter(std::size_t m) const {
    return {weights_.data() + m * n_bins_, n_bins_};
  }

 private:
  std::size_t n_filters_;
  std::size_t n_bins_;
  std::vector<double> centers_hz_;
  std::vector<double> weights_;
};

/// Row-major matrix of mel energies (n_frames x n_filters).
struct MelRows {
  std::size_t n_filters = 26;
  std::vector<double> data;

  std::size_t size() const { return n_filters == 0 ? 0 : data.size() / n_filters; }
  std::span<const double> operator[](std::size_t k) const {
    return {data.data() + k * n_filters, n_filters};
  }
};

inline MelRows mel_energies(const SpectrogramSlice& spec, const MelFilterbank& bank) {
  if (bank.n_bins() != spec.n_bins()) {
    fail(ErrorCode::kDimensionMismatch, "filterbank and spectrum bin counts differ");
  }
  MelRows rows;
  rows.n_filters = bank.n_filters();
  rows.data.resize(spec.n_frames() * rows.n_filters);
  for (std::size_t k = 0; k < spec.n_frames(); ++k) {
    auto p = spec.frame(k);
    for (std::size_t m = 0; m < bank.n_filters(); ++m) {
      auto w = bank.filter(m);
      double e = 0.0;
      for (std::size_t b = 0; b < p.size(); ++b) e += w[b] * p[b];
      rows.data[k * rows.n_filters + m] = e;
    }
  }
  return rows;
}

/// Orthonormal DCT-II of the full input.
inline std::vector<double> dct_ii(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> c(n, 0.0);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) *
                             (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    }
    c[k] = (k == 0 ? s0 : sk) * acc;
  }
  return c;
}

/// Per-frame cepstra, log energies and frame times.
struct FeatureMatrix {
  std::size_t n_coeffs = 13;
  double hop_s = 0.01;
  double frame_s = 0.025;
  std::vector<double> mfcc;  // row-major, n_frames x n_coeffs
  std::vector<double> log_energy;
  std::vector<double> frame_times_s;

  std::size_t rows() const { return log_energy.size(); }
  std::span<const double> row(std::size_t k) const {
    return {mfcc.data() + k * n_coeffs, n_coeffs};
  }
};

/// c = DCT-II(ln(max(e, floor))), truncated to n_coeffs. Returns row-major data.
inline std::vector<double> mfcc(const MelRows& mel, std::size_t n_coeffs = 13,
                                double floor = kLogFloor) {
  if (n_coeffs > mel.n_filters) fail(ErrorCode::kInvalidConfig, "more cepstra than filters");
  std::vector<double> out;
  out.reserve(mel.size() * n_coeffs);
  std::vector<double> logs(mel.n_filters);
  for (std::size_t k = 0; k < mel.size(); ++k) {
    auto e = mel[k];
    for (std::size_t m = 0; m < e.size(); ++m) logs[m] = std::log(std::max(e[m], floor));
    const auto c = dct_ii(logs);
    out.insert(out.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n_coeffs));
  }
  return out;
}

/// ln(max(sum of squares, floor)) per frame.
inline std::vector<double> log_energy(const Frames& frames, double floor = kLogFloor) {
  std::vector<double> out(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    double e = 0.0;
    for (double s : frames[k]) e += s * s;
    out[k] = std::log(std::max(e, floor));
  }
  return out;
}

/// Rounds every value to the nearest float so the in-memory matrix equals
/// its serialized form.
inline void quantize_to_f32(FeatureMatrix& fm) {
  for (double& v : fm.mfcc) v = static_cast<float>(v);
  for (double& v : fm.log_energy) v = static_cast<float>(v);
}

/// Full front end on a canonical-rate clip.
inline FeatureMatrix compute_features(const AudioClip& clip, const FrameGrid& grid = {},
                                      const MelFilterbank& bank = {}, std::size_t n_coeffs = 13) {
  const Frames frames = frame_signal(clip, grid);
  const SpectrogramSlice spec = power_spectrum(frames, 512, clip.sample_rate);
  FeatureMatrix fm;
  fm.n_coeffs = n_coeffs;
  fm.hop_s = grid.hop_s(clip.sample_rate);
  fm.frame_s = grid.frame_s(clip.sample_rate);
  fm.mfcc = mfcc(mel_energies(spec, bank), n_coeffs);
  // Speech energy sits where pre-emphasis cuts hardest, so VAD energy uses the
  // same window without it.
  fm.log_energy = log_energy(frame_signal(clip, FrameGrid(grid.frame_length, grid.hop, 0.0)));
  fm.frame_times_s.resize(fm.log_energy.size());
  for (std::size_t k = 0; k < fm.frame_times_s.size(); ++k)
    fm.frame_times_s[k] = static_cast<double>(k) * fm.hop_s;
  return fm;
}

// features.bin layout, little-endian:
//   "STFM" u32 version=1 u32 n_frames u32 n_coeffs f64 hop_s f64 frame_s
//   n_frames rows of (n_coeffs + 1) f32: c0..c{n-1}, log_energy
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline Bytes serialize_features(const FeatureMatrix& fm) {
  ByteWriter w;
  w.tag("STFM");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(fm.rows()));
  w.u32(static_cast<std::uint32_t>(fm.n_coeffs));
  w.f64(fm.hop_s);
  w.f64(fm.frame_s);
  for (std::size_t k = 0; k < fm.rows(); ++k) {
    for (double c : fm.row(k)) w.f32(static_cast<float>(c));
    w.f32(static_cast<float>(fm.log_energy[k]));
  }
  return w.take();
}

inline FeatureMatrix deserialize_features(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::kCorruptArtifact);
  if (r.tag() != "STFM") fail(ErrorCode::kCorruptArtifact, "bad feature magic");
  if (r.u32() != kFeatureFormatVersion) fail(ErrorCode::kCorruptArtifact, "unknown feature version");
  FeatureMatrix fm;
  const std::uint32_t n = r.u32();
  fm.n_coeffs = r.u32();
  fm.hop_s = r.f64();
  fm.frame_s = r.f64();
  if (r.remaining() != static_cast<std::size_t>(n) * (fm.n_coeffs + 1) * 4) {
    fail(ErrorCode::kCorruptArtifact, "feature payload size mismatch");
  }
  fm.mfcc.reserve(static_cast<std::size_t>(n) * fm.n_coeffs);
  fm.log_energy.reserve(n);
  fm.frame_times_s.reserve(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    for (std::size_t c = 0; c < fm.n_coeffs; ++c) fm.mfcc.push_back(r.f32());
    fm.log_energy.push_back(r.f32());
    fm.frame_times_s.push_back(static_cast<double>(k) * fm.hop_s);
  }
  return fm;
}

}  // namespace stan
