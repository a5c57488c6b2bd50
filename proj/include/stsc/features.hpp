// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>

#include "stsc/audio.hpp"
#include "stsc/error.hpp"

namespace stsc {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// STFT and mel analysis parameters. hop = 500 at 8 kHz gives 16 frames/s.
struct FrameSpec {
  int n_fft = 1024;
  int hop = 500;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 4000.0;

  void validate(int sample_rate) const {
    require(n_fft > 0 && hop > 0 && hop <= n_fft, Errc::InvalidArgument,
            "FrameSpec requires 0 < hop <= n_fft");
    require(n_mels >= 1, Errc::InvalidArgument, "n_mels must be >= 1");
    require(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0,
            Errc::InvalidArgument, "FrameSpec requires 0 <= fmin < fmax <= nyquist");
  }

  double frame_rate(int sample_rate) const {
    return static_cast<double>(sample_rate) / hop;
  }
};

inline constexpr double kDbFloor = -80.0;

/// Row-major T x n_bins power spectrogram.
struct PowerSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> values;

  double at(int t, int k) const { return values[static_cast<std::size_t>(t) * bins + k]; }
};

/// Decibel mel spectrogram, frame-major (T x n_mels), values in [-80, 0].
struct MelSpectrogram {
  int frames = 0;
  int n_mels = 0;
  double frame_rate = 16.0;
  std::string source_id;
  std::vector<float> values;

  float at(int t, int band) const {
    return values[static_cast<std::size_t>(t) * n_mels + band];
  }
};

/// Triangular filters, n_mels x (n_fft/2 + 1), row-major.
struct FilterBank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;
  std::vector<double> band_edges; // n_mels + 2 Hz values

  double at(int m, int k) const {
    return weights[static_cast<std::size_t>(m) * n_bins + k];
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace detail {

inline std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex FFT of fixed size. Planning is serialized; execution is
/// reentrant across instances.
class RealFft {
public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard lock(fftw_planner_mutex());
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(int k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }
  std::complex<double> bin(int k) const { return {out_[k][0], out_[k][1]}; }
  int size() const { return n_; }

private:
  int n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Index into a signal of length len after symmetric (edge-excluded)
/// reflection padding.
inline std::size_t reflect_index(std::int64_t j, std::int64_t len) {
  if (len == 1)
    return 0;
  const std::int64_t period = 2 * (len - 1);
  j %= period;
  if (j < 0)
    j += period;
  if (j >= len)
    j = period - j;
  return static_cast<std::size_t>(j);
}

} // namespace detail

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n); // periodic
  return w;
}

/// Number of centred frames produced for a signal of `len` samples.
inline int frame_count(std::size_t len, int hop) {
  return static_cast<int>((len + static_cast<std::size_t>(hop) - 1) / hop);
}

inline PowerSpectrogram stft_power(const AudioBuffer &buf, const FrameSpec &spec = {}) {
  require(!buf.samples.empty(), Errc::EmptySignal, "stft of empty signal");
  require(buf.sample_rate == kPipelineRate, Errc::InvalidArgument,
          "stft expects audio at the pipeline rate");
  spec.validate(buf.sample_rate);

  const auto len = static_cast<std::int64_t>(buf.samples.size());
  const int half = spec.n_fft / 2;
  PowerSpectrogram out;
  out.frames = frame_count(buf.samples.size(), spec.hop);
  out.bins = half + 1;
  out.values.assign(static_cast<std::size_t>(out.frames) * out.bins, 0.0);

  const auto window = hann_window(spec.n_fft);
  detail::RealFft fft(spec.n_fft);
  for (int t = 0; t < out.frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * spec.hop - half;
    double *in = fft.input();
    for (int i = 0; i < spec.n_fft; ++i)
      in[i] = window[i] * buf.samples[detail::reflect_index(start + i, len)];
    fft.execute();
    double *row = out.values.data() + static_cast<std::size_t>(t) * out.bins;
    for (int k = 0; k < out.bins; ++k)
      row[k] = fft.power(k);
  }
  return out;
}

/// HTK-mel triangular filterbank, each row peak-normalized to 1.
inline FilterBank build_mel_filterbank(const FrameSpec &spec = {},
                                       int sample_rate = kPipelineRate) {
  spec.validate(sample_rate);
  FilterBank fb;
  fb.n_mels = spec.n_mels;
  fb.n_bins = spec.n_fft / 2 + 1;
  fb.weights.assign(static_cast<std::size_t>(fb.n_mels) * fb.n_bins, 0.0);

  const double mel_lo = hz_to_mel(spec.fmin);
  const double mel_hi = hz_to_mel(spec.fmax);
  const int points = spec.n_mels + 2;
  fb.band_edges.resize(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    fb.band_edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (points - 1));

  const double bin_hz = static_cast<double>(sample_rate) / spec.n_fft;
  for (int m = 0; m < fb.n_mels; ++m) {
    const double lo = fb.band_edges[m];
    const double centre = fb.band_edges[m + 1];
    const double hi = fb.band_edges[m + 2];
    double peak = 0.0;
    for (int k = 0; k < fb.n_bins; ++k) {
      const double f = k * bin_hz;
      const double rise = (f - lo) / (centre - lo);
      const double fall = (hi - f) / (hi - centre);
      const double w = std::max(0.0, std::min(rise, fall));
      fb.weights[static_cast<std::size_t>(m) * fb.n_bins + k] = w;
      peak = std::max(peak, w);
    }
    double *row = fb.weights.data() + static_cast<std::size_t>(m) * fb.n_bins;
    if (peak > 0.0) {
      for (int k = 0; k < fb.n_bins; ++k)
        row[k] /= peak;
    } else {
      // filter narrower than one FFT bin: collapse onto the nearest bin
      const int k = std::clamp(static_cast<int>(std::lround(centre / bin_hz)), 0,
                               fb.n_bins - 1);
      row[k] = 1.0;
    }
  }
  return fb;
}

/// Project power onto the filterbank: T x n_mels mel power.
inline std::vector<double> apply_filterbank(const PowerSpectrogram &power,
                                            const FilterBank &fb) {
  require(power.bins == fb.n_bins, Errc::ShapeMismatch,
          "power spectrum bins do not match filterbank");
  std::vector<double> mel(static_cast<std::size_t>(power.frames) * fb.n_mels, 0.0);
  for (int t = 0; t < power.frames; ++t) {
    const double *p = power.values.data() + static_cast<std::size_t>(t) * power.bins;
    for (int m = 0; m < fb.n_mels; ++m) {
      const double *w = fb.weights.data() + static_cast<std::size_t>(m) * fb.n_bins;
      double acc = 0.0;
      for (int k = 0; k < fb.n_bins; ++k)
        acc += w[k] * p[k];
      mel[static_cast<std::size_t>(t) * fb.n_mels + m] = acc;
    }
  }
  return mel;
}

/// 10 log10(p / max p) floored at -80 dB; an all-zero input maps to the floor.
inline std::vector<float> power_to_db(const std::vector<double> &power) {
  double peak = 0.0;
  for (double p : power)
    peak = std::max(peak, p);
  std::vector<float> db(power.size(), static_cast<float>(kDbFloor));
  if (peak <= 0.0)
    return db;
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (power[i] > 0.0)
      db[i] = static_cast<float>(std::max(kDbFloor, 10.0 * std::log10(power[i] / peak)));
  }
  return db;
}

inline MelSpectrogram melspectrogram_db(const AudioBuffer &buf, const FrameSpec &spec,
                                        const FilterBank &fb) {
  const auto power = stft_power(buf, spec);
  MelSpectrogram out;
  out.frames = power.frames;
  out.n_mels = fb.n_mels;
  out.frame_rate = spec.frame_rate(buf.sample_rate);
  out.source_id = buf.source_id;
  out.values = power_to_db(apply_filterbank(power, fb));
  return out;
}

inline MelSpectrogram melspectrogram_db(const AudioBuffer &buf, const FrameSpec &spec = {}) {
  return melspectrogram_db(buf, spec, build_mel_filterbank(spec, buf.sample_rate));
}

// ---------------------------------------------------------------------------
// Fragments

inline constexpr int kFragmentFrames = 16;
inline constexpr int kFragmentOverlap = 15;

struct FragmentOrigin {
  std::string source_id;
  int start_frame = 0;
};

/// Band-major (n_bands x n_frames) window of a spectrogram, rescaled from
/// [-80, 0] dB to [0, 1].
struct MelFragment {
  int n_bands = 128;
  int n_frames = kFragmentFrames;
  std::vector<float> values;
  FragmentOrigin origin;

  float at(int band, int frame) const {
    return values[static_cast<std::size_t>(band) * n_frames + frame];
  }
};

inline int fragment_count(int frames, int width = kFragmentFrames,
                          int overlap = kFragmentOverlap) {
  require(width > overlap && overlap >= 0, Errc::InvalidArgument,
          "fragment requires width > overlap >= 0");
  if (frames < width)
    return 0;
  return (frames - width) / (width - overlap) + 1;
}

inline float normalize_db(float db) {
  return static_cast<float>((static_cast<double>(db) - kDbFloor) / -kDbFloor);
}

/// Extract one fragment starting at `start_frame`.
inline MelFragment extract_fragment(const MelSpectrogram &spec, int start_frame,
                                    int width = kFragmentFrames) {
  require(start_frame >= 0 && start_frame + width <= spec.frames, Errc::InvalidArgument,
          "fragment window outside spectrogram");
  MelFragment f;
  f.n_bands = spec.n_mels;
  f.n_frames = width;
  f.values.resize(static_cast<std::size_t>(f.n_bands) * width);
  for (int b = 0; b < f.n_bands; ++b)
    for (int t = 0; t < width; ++t)
      f.values[static_cast<std::size_t>(b) * width + t] = normalize_db(spec.at(start_frame + t, b));
  f.origin = {spec.source_id, start_frame};
  return f;
}

inline std::vector<MelFragment> fragment(const MelSpectrogram &spec,
                                         int width = kFragmentFrames,
                                         int overlap = kFragmentOverlap) {
  const int count = fragment_count(spec.frames, width, overlap);
  std::vector<MelFragment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(extract_fragment(spec, i * (width - overlap), width));
  return out;
}

// ---------------------------------------------------------------------------
// Fragment cache: 16-byte header then count * n_bands * n_frames f32 values.
//   magic "STFC" | u16 version | u16 n_bands | u16 n_frames | u16 reserved | u32 count

inline constexpr std::uint16_t kFragmentCacheVersion = 1;

inline void write_fragment_cache(const std::vector<MelFragment> &frags,
                                 const std::filesystem::path &path) {
  std::vector<unsigned char> out;
  const std::uint16_t bands = frags.empty() ? 0 : static_cast<std::uint16_t>(frags[0].n_bands);
  const std::uint16_t width = frags.empty() ? 0 : static_cast<std::uint16_t>(frags[0].n_frames);
  detail::put_tag(out, "STFC");
  detail::put_u16(out, kFragmentCacheVersion);
  detail::put_u16(out, bands);
  detail::put_u16(out, width);
  detail::put_u16(out, 0);
  detail::put_u32(out, static_cast<std::uint32_t>(frags.size()));
  for (const auto &f : frags) {
    require(f.n_bands == bands && f.n_frames == width, Errc::ShapeMismatch,
            "fragments in one cache must share a shape");
    const auto *raw = reinterpret_cast<const unsigned char *>(f.values.data());
    out.insert(out.end(), raw, raw + f.values.size() * sizeof(float));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    fail(Errc::IoError, "cannot write " + path.string());
  file.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
}

inline std::vector<MelFragment> read_fragment_cache(const std::filesystem::path &path,
                                                    const std::string &source_id = {}) {
  const auto bytes = read_file_bytes(path);
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), "STFC", 4) == 0,
          Errc::CorruptFile, "bad fragment cache header in " + path.string());
  const std::uint16_t version = detail::read_u16(bytes.data() + 4);
  require(version == kFragmentCacheVersion, Errc::VersionMismatch,
          "fragment cache version " + std::to_string(version));
  const int bands = detail::read_u16(bytes.data() + 6);
  const int width = detail::read_u16(bytes.data() + 8);
  const std::uint32_t count = detail::read_u32(bytes.data() + 12);
  const std::size_t per = static_cast<std::size_t>(bands) * width;
  require(bytes.size() == 16 + count * per * sizeof(float), Errc::CorruptFile,
          "fragment cache size mismatch in " + path.string());
  std::vector<MelFragment> out(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto &f = out[i];
    f.n_bands = bands;
    f.n_frames = width;
    f.values.resize(per);
    std::memcpy(f.values.data(), bytes.data() + 16 + i * per * sizeof(float),
                per * sizeof(float));
    f.origin = {source_id, static_cast<int>(i)};
  }
  return out;
}

} // namespace stsc
