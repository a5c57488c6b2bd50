// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stsc/error.hpp"

namespace stsc {

/// Pipeline working rate for every feature computation.
inline constexpr int kPipelineRate = 8000;

/// Mono waveform with amplitudes in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kPipelineRate;
  std::string source_id;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { Pcm16, Float32 };

namespace detail {

inline std::uint16_t read_u16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<unsigned char> &out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_u32(std::vector<unsigned char> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<unsigned char> &out, const char *tag) {
  out.insert(out.end(), tag, tag + 4);
}

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

} // namespace detail

/// Decode a RIFF/WAVE byte image (PCM 16-bit or IEEE float 32-bit, mono or
/// stereo). Stereo is averaged to mono.
inline AudioBuffer decode_wav(std::span<const unsigned char> bytes,
                              std::string source_id = {}) {
  using detail::read_u16;
  using detail::read_u32;
  const auto n = bytes.size();
  require(n >= 12, Errc::CorruptHeader, "file shorter than RIFF header");
  const unsigned char *p = bytes.data();
  require(std::memcmp(p, "RIFF", 4) == 0 && std::memcmp(p + 8, "WAVE", 4) == 0,
          Errc::CorruptHeader, "missing RIFF/WAVE signature");
  const std::uint64_t riff_size = read_u32(p + 4);
  require(riff_size + 8 <= n, Errc::CorruptHeader,
          "RIFF size exceeds file length");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const unsigned char *data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  const std::size_t end = static_cast<std::size_t>(riff_size + 8);
  while (pos + 8 <= end) {
    const unsigned char *chunk = p + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    require(pos + 8 + static_cast<std::uint64_t>(size) <= end,
            Errc::CorruptHeader, "chunk extends past end of RIFF");
    const unsigned char *body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, Errc::CorruptHeader, "fmt chunk too small");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      block_align = read_u16(body + 12);
      bits = read_u16(body + 14);
      if (format == 0xFFFE) {
        require(size >= 40, Errc::CorruptHeader,
                "extensible fmt chunk too small");
        format = read_u16(body + 24); // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1u);
  }
  require(have_fmt, Errc::CorruptHeader, "missing fmt chunk");
  require(data != nullptr, Errc::CorruptHeader, "missing data chunk");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    fail(Errc::UnsupportedEncoding,
         "format tag " + std::to_string(format) + " with " +
             std::to_string(bits) + " bits");
  if (channels != 1 && channels != 2)
    fail(Errc::UnsupportedEncoding,
         std::to_string(channels) + " channels");
  require(rate > 0, Errc::CorruptHeader, "zero sample rate");
  const std::uint32_t frame_bytes = channels * (bits / 8u);
  require(block_align == frame_bytes, Errc::CorruptHeader,
          "block_align inconsistent with channels and bit depth");
  require(data_size % frame_bytes == 0, Errc::CorruptHeader,
          "data size is not a whole number of frames");

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.source_id = std::move(source_id);
  const std::size_t frames = data_size / frame_bytes;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint32_t c = 0; c < channels; ++c) {
      const unsigned char *s = data + i * frame_bytes + c * (bits / 8u);
      double v;
      if (pcm16) {
        v = static_cast<std::int16_t>(read_u16(s)) / 32768.0;
      } else {
        float f;
        const std::uint32_t raw = read_u32(s);
        std::memcpy(&f, &raw, sizeof f);
        v = std::isfinite(f) ? static_cast<double>(f) : 0.0;
      }
      acc += v;
    }
    out.samples[i] = detail::clamp_unit(acc / channels);
  }
  return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(Errc::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioBuffer load_wav(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    fail(Errc::FileNotFound, path.string());
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes, path.string());
}

/// Encode a mono buffer as a canonical 44-byte-header WAV image.
inline std::vector<unsigned char> encode_wav(const AudioBuffer &buf,
                                             WavEncoding enc = WavEncoding::Pcm16) {
  using namespace detail;
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::Pcm16 ? 1 : 3;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(buf.samples.size() * (bits / 8u));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * (bits / 8u));
  put_u16(out, bits / 8u);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (double x : buf.samples) {
    if (enc == WavEncoding::Pcm16) {
      const double scaled = std::nearbyint(clamp_unit(x) * 32768.0);
      const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      put_u16(out, static_cast<std::uint16_t>(v));
    } else {
      const float f = static_cast<float>(clamp_unit(x));
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }
  return out;
}

inline void write_wav(const AudioBuffer &buf, const std::filesystem::path &path,
                      WavEncoding enc = WavEncoding::Pcm16) {
  const auto bytes = encode_wav(buf, enc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(Errc::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

/// Modified Bessel function of the first kind, order zero.
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum)
      break;
  }
  return sum;
}

inline double sinc(double x) {
  if (x == 0.0)
    return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

} // namespace detail

/// Kaiser windowed-sinc resampler. The filter spans `kTapsPerPhase` samples
/// at the lower of the two rates (16 zero crossings either side of centre).
struct ResamplerDesign {
  static constexpr int kTapsPerPhase = 32;
  static constexpr double kBeta = 8.6;
};

inline AudioBuffer resample(const AudioBuffer &buf, int target_rate) {
  require(target_rate > 0, Errc::InvalidArgument, "target_rate must be positive");
  require(buf.sample_rate > 0, Errc::InvalidArgument, "source rate must be positive");
  if (target_rate == buf.sample_rate)
    return buf;

  const std::uint64_t src = static_cast<std::uint64_t>(buf.sample_rate);
  const std::uint64_t tgt = static_cast<std::uint64_t>(target_rate);
  const std::uint64_t g = std::gcd(src, tgt);
  const std::uint64_t up = tgt / g;   // L
  const std::uint64_t down = src / g; // M
  const std::size_t in_len = buf.samples.size();
  const std::size_t out_len =
      static_cast<std::size_t>((in_len * tgt + src / 2) / src);

  const double fc = std::min(1.0, static_cast<double>(tgt) / src);
  const double half_width = (ResamplerDesign::kTapsPerPhase / 2) / fc;
  const int reach = static_cast<int>(std::ceil(half_width));
  const int ntaps = 2 * reach;
  const double i0_beta = detail::bessel_i0(ResamplerDesign::kBeta);

  // taps for fractional offset `frac` in [0, 1); tap j sits at source index
  // base - reach + 1 + j, i.e. offset t = (j - reach + 1) - frac.
  auto design = [&](double frac, double *taps) {
    double sum = 0.0;
    for (int j = 0; j < ntaps; ++j) {
      const double t = static_cast<double>(j - reach + 1) - frac;
      const double u = t / half_width;
      double w = 0.0;
      if (std::abs(u) < 1.0)
        w = detail::bessel_i0(ResamplerDesign::kBeta * std::sqrt(1.0 - u * u)) /
            i0_beta;
      taps[j] = fc * detail::sinc(fc * t) * w;
      sum += taps[j];
    }
    for (int j = 0; j < ntaps; ++j)
      taps[j] /= sum; // unit DC gain in every phase
  };

  const bool use_table = up <= 4096;
  std::vector<double> table;
  if (use_table) {
    table.resize(up * ntaps);
    for (std::uint64_t ph = 0; ph < up; ++ph)
      design(static_cast<double>(ph) / up, table.data() + ph * ntaps);
  }
  std::vector<double> scratch(use_table ? 0 : ntaps);

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.source_id = buf.source_id;
  out.samples.resize(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const std::uint64_t num = n * down; // source position = num / up
    const std::int64_t base = static_cast<std::int64_t>(num / up);
    const std::uint64_t phase = num % up;
    const double *taps;
    if (use_table) {
      taps = table.data() + phase * ntaps;
    } else {
      design(static_cast<double>(phase) / up, scratch.data());
      taps = scratch.data();
    }
    double acc = 0.0;
    for (int j = 0; j < ntaps; ++j) {
      const std::int64_t idx = base - reach + 1 + j;
      if (idx >= 0 && idx < static_cast<std::int64_t>(in_len))
        acc += taps[j] * buf.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[n] = detail::clamp_unit(acc);
  }
  return out;
}

} // namespace stsc
