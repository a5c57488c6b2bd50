// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "stsc/audio.hpp"
#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/features.hpp"
#include "stsc/random.hpp"

namespace stsc {

/// Band: depressed speakers carry bursts in one mel band range.
/// Pair: every speaker carries coincident bursts in two band ranges; the
/// spacing between them (not the energy in any band) encodes the class.
enum class MarkerKind { Band, Pair };

struct SynthSpec {
  int n_speakers = 60;
  double depressed_fraction = 0.3;
  double min_duration = 3.5; // seconds
  double max_duration = 5.0;
  int marker_band_lo = 40; // mel band indices, inclusive
  int marker_band_hi = 47;
  double marker_prevalence = 0.5;
  double marker_gain_db = 12.0;
  MarkerKind marker_kind = MarkerKind::Band;
  int pair_gap = 24;  // band offset of the second burst, depressed speakers
  int decoy_gap = 48; // band offset of the second burst, healthy speakers
  bool severity_scaled = false;
  double noise_floor_db = -30.0; // pink-noise level relative to the voiced part
  int sample_rate = kPipelineRate;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_speakers < 2) fail(Errc::ConfigInvalid, "n_speakers: must be >= 2");
    if (!(depressed_fraction > 0.0 && depressed_fraction < 1.0))
      fail(Errc::ConfigInvalid, "depressed_fraction: must be in (0, 1)");
    if (!(min_duration > 0.0 && max_duration >= min_duration))
      fail(Errc::ConfigInvalid, "duration range: need 0 < min_duration <= max_duration");
    if (marker_band_lo < 0 || marker_band_hi < marker_band_lo || marker_band_hi >= 128)
      fail(Errc::ConfigInvalid, "marker band: need 0 <= lo <= hi < 128");
    // zero prevalence is allowed here: it is the no-signal control corpus
    if (!(marker_prevalence >= 0.0 && marker_prevalence <= 1.0))
      fail(Errc::ConfigInvalid, "marker_prevalence: must be in [0, 1]");
    if (marker_kind == MarkerKind::Pair &&
        (marker_band_hi + std::max(pair_gap, decoy_gap) >= 128 || pair_gap < 1 || decoy_gap < 1))
      fail(Errc::ConfigInvalid, "pair marker: offsets must keep both bursts inside 128 bands");
    if (sample_rate < 8000) fail(Errc::ConfigInvalid, "sample_rate: must be >= 8000");
  }

  int n_depressed() const {
    return static_cast<int>(std::lround(n_speakers * depressed_fraction));
  }

  nlohmann::json to_json() const {
    return {{"n_speakers", n_speakers},
            {"depressed_fraction", depressed_fraction},
            {"min_duration", min_duration},
            {"max_duration", max_duration},
            {"marker_band_lo", marker_band_lo},
            {"marker_band_hi", marker_band_hi},
            {"marker_prevalence", marker_prevalence},
            {"marker_gain_db", marker_gain_db},
            {"marker_kind", marker_kind == MarkerKind::Band ? "band" : "pair"},
            {"pair_gap", pair_gap},
            {"decoy_gap", decoy_gap},
            {"severity_scaled", severity_scaled},
            {"noise_floor_db", noise_floor_db},
            {"sample_rate", sample_rate},
            {"seed", seed}};
  }

  static SynthSpec from_json(const nlohmann::json &j) {
    SynthSpec s;
    auto num = [&](const char *key, double &dst) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number()) fail(Errc::ConfigInvalid, std::string(key) + ": expected a number");
      dst = j.at(key).get<double>();
    };
    auto integer = [&](const char *key, int &dst) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number_integer())
        fail(Errc::ConfigInvalid, std::string(key) + ": expected an integer");
      dst = j.at(key).get<int>();
    };
    integer("n_speakers", s.n_speakers);
    num("depressed_fraction", s.depressed_fraction);
    num("min_duration", s.min_duration);
    num("max_duration", s.max_duration);
    integer("marker_band_lo", s.marker_band_lo);
    integer("marker_band_hi", s.marker_band_hi);
    num("marker_prevalence", s.marker_prevalence);
    num("marker_gain_db", s.marker_gain_db);
    integer("pair_gap", s.pair_gap);
    integer("decoy_gap", s.decoy_gap);
    num("noise_floor_db", s.noise_floor_db);
    integer("sample_rate", s.sample_rate);
    if (j.contains("marker_kind")) {
      if (!j.at("marker_kind").is_string())
        fail(Errc::ConfigInvalid, "marker_kind: expected 'band' or 'pair'");
      const auto k = j.at("marker_kind").get<std::string>();
      if (k == "band") s.marker_kind = MarkerKind::Band;
      else if (k == "pair") s.marker_kind = MarkerKind::Pair;
      else fail(Errc::ConfigInvalid, "marker_kind: expected 'band' or 'pair'");
    }
    if (j.contains("severity_scaled")) {
      if (!j.at("severity_scaled").is_boolean())
        fail(Errc::ConfigInvalid, "severity_scaled: expected a boolean");
      s.severity_scaled = j.at("severity_scaled").get<bool>();
    }
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_integer())
        fail(Errc::ConfigInvalid, "seed: expected a non-negative integer");
      s.seed = j.at("seed").get<std::uint64_t>();
    }
    return s;
  }
};

struct SynthSpeaker {
  std::string speaker_id;
  int phq8 = 0;
  int label = 0;
  double prevalence = 0.0; // fraction of hop blocks carrying the marker
  AudioBuffer audio;
};

namespace detail {

/// Whole-signal FFT filter helper (forward r2c, mask, inverse c2r).
class SpectralShaper {
public:
  // Signals of length n are zero-padded to a 5-smooth transform size; prime
  // lengths would otherwise take FFTW's slow path.
  explicit SpectralShaper(std::size_t n) : len_(n), n_(smooth_size(n)) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    buf_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(n_ / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), buf_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, buf_, FFTW_ESTIMATE);
  }

  static std::size_t smooth_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
      std::size_t r = m;
      for (std::size_t f : {2, 3, 5})
        while (r % f == 0)
          r /= f;
      if (r == 1)
        return m;
    }
  }
  ~SpectralShaper() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
    fftw_free(spec_);
  }
  SpectralShaper(const SpectralShaper &) = delete;
  SpectralShaper &operator=(const SpectralShaper &) = delete;

  /// Mean power (per sample) of `x` restricted to [lo_hz, hi_hz].
  double band_power(const std::vector<double> &x, double rate, double lo_hz, double hi_hz) {
    load(x);
    fftw_execute(fwd_);
    double acc = 0.0;
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n_);
      if (f < lo_hz || f > hi_hz)
        continue;
      const double mag2 = spec_[k][0] * spec_[k][0] + spec_[k][1] * spec_[k][1];
      // one-sided spectrum: interior bins stand for two
      acc += (k == 0 || 2 * k == n_) ? mag2 : 2.0 * mag2;
    }
    // Parseval over the padded transform, per original sample
    return acc / (static_cast<double>(n_) * static_cast<double>(len_));
  }

  /// `x` with everything outside [lo_hz, hi_hz] removed.
  std::vector<double> band_pass(const std::vector<double> &x, double rate, double lo_hz,
                                double hi_hz) {
    load(x);
    fftw_execute(fwd_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n_);
      if (f < lo_hz || f > hi_hz)
        spec_[k][0] = spec_[k][1] = 0.0;
    }
    fftw_execute(inv_);
    std::vector<double> out(buf_, buf_ + len_);
    for (auto &v : out)
      v /= static_cast<double>(n_);
    return out;
  }

private:
  void load(const std::vector<double> &x) {
    require(x.size() == len_, Errc::ShapeMismatch, "SpectralShaper: signal length changed");
    std::copy(x.begin(), x.end(), buf_);
    std::fill(buf_ + len_, buf_ + n_, 0.0);
  }

  std::size_t len_;
  std::size_t n_;
  double *buf_ = nullptr;
  fftw_complex *spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline double mean_power(const std::vector<double> &x) {
  double acc = 0.0;
  for (double v : x)
    acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

/// Pink-ish noise: white Gaussian noise through Paul Kellet's economy filter.
inline std::vector<double> pink_noise(std::size_t n, Rng &rng) {
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto &v : out) {
    const double w = standard_normal(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = b0 + b1 + b2 + w * 0.1848;
  }
  return out;
}

/// Smooth 0/1 gate over hop-sized blocks centred on STFT frame centres, with
/// raised-cosine edges.
inline std::vector<double> block_gate(std::size_t n, int hop, double prob, Rng &rng) {
  const std::size_t blocks = (n + static_cast<std::size_t>(hop) - 1) / hop + 1;
  std::vector<double> on(blocks);
  for (auto &b : on)
    b = uniform01(rng) < prob ? 1.0 : 0.0;
  std::vector<double> gate(n);
  const double half = hop / 2.0;
  const double ramp = hop / 8.0;
  for (std::size_t i = 0; i < n; ++i) {
    // block t covers [t*hop - hop/2, t*hop + hop/2)
    const double pos = static_cast<double>(i) + half;
    const std::size_t t = static_cast<std::size_t>(pos / hop);
    const double within = pos - static_cast<double>(t) * hop; // [0, hop)
    double g = on[t];
    if (within < ramp && t > 0 && on[t - 1] != on[t]) {
      const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * (0.5 + within / (2 * ramp)));
      g = on[t - 1] + (on[t] - on[t - 1]) * w;
    } else if (within > hop - ramp && t + 1 < blocks && on[t + 1] != on[t]) {
      const double w =
          0.5 - 0.5 * std::cos(std::numbers::pi * ((within - (hop - ramp)) / (2 * ramp)));
      g = on[t] + (on[t + 1] - on[t]) * w;
    }
    gate[i] = g;
  }
  return gate;
}

/// Hz span from the centre of mel band `lo` to the centre of band `hi`,
/// widened by half a band on each side.
inline std::pair<double, double> band_hz(int lo, int hi) {
  const auto fb = build_mel_filterbank(FrameSpec{}, kPipelineRate);
  const double a = 0.5 * (fb.band_edges[static_cast<std::size_t>(lo)] +
                          fb.band_edges[static_cast<std::size_t>(lo) + 1]);
  const double b = 0.5 * (fb.band_edges[static_cast<std::size_t>(hi) + 1] +
                          fb.band_edges[static_cast<std::size_t>(hi) + 2]);
  return {a, b};
}

} // namespace detail

/// Assign labels and severities, then synthesise one speaker's recording.
inline std::vector<SynthSpeaker> synth_speakers(const SynthSpec &spec) {
  spec.validate();
  Rng plan_rng(derive_seed(spec.seed, 0x5EED));
  std::vector<int> order(static_cast<std::size_t>(spec.n_speakers));
  std::iota(order.begin(), order.end(), 0);
  shuffle_in_place(order, plan_rng);
  std::vector<int> label(order.size(), 0);
  for (int i = 0; i < spec.n_depressed(); ++i)
    label[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  std::vector<SynthSpeaker> out;
  out.reserve(order.size());
  for (int i = 0; i < spec.n_speakers; ++i) {
    Rng rng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(i)));
    SynthSpeaker sp;
    char id[16];
    std::snprintf(id, sizeof id, "S%03d", i);
    sp.speaker_id = id;
    sp.label = label[static_cast<std::size_t>(i)];
    sp.phq8 = sp.label ? 10 + static_cast<int>(uniform_index(rng, 15))
                       : static_cast<int>(uniform_index(rng, 10));

    const int rate = spec.sample_rate;
    const double duration = uniform(rng, spec.min_duration, spec.max_duration);
    const auto n = static_cast<std::size_t>(std::lround(duration * rate));
    const double f0 = uniform(rng, 95.0, 230.0);
    const double vib_rate = uniform(rng, 3.0, 6.0);
    const double vib_depth = uniform(rng, 0.02, 0.08);
    const double syl_rate = uniform(rng, 2.5, 5.0);
    const double tilt = uniform(rng, 0.8, 1.6);
    const double phase0 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double noise_db = spec.noise_floor_db + uniform(rng, -6.0, 6.0);

    // voiced part: harmonic series with vibrato and a syllabic envelope
    std::vector<double> voice(n, 0.0);
    double phase = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double t = static_cast<double>(s) / rate;
      const double f = f0 * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t + phase0));
      phase += 2.0 * std::numbers::pi * f / rate;
      const double env = 0.25 + 0.75 * std::abs(std::sin(std::numbers::pi * syl_rate * t + phase0));
      double acc = 0.0;
      for (int k = 1; k * f < 0.95 * std::min(rate, kPipelineRate) / 2.0; ++k)
        acc += std::sin(k * phase) / std::pow(k, tilt);
      voice[s] = env * acc;
    }
    auto noise = detail::pink_noise(n, rng);
    const double vp = detail::mean_power(voice);
    const double np = detail::mean_power(noise);
    const double noise_scale = std::sqrt(vp / np * std::pow(10.0, noise_db / 10.0));
    std::vector<double> base(n);
    for (std::size_t s = 0; s < n; ++s)
      base[s] = voice[s] + noise_scale * noise[s];

    sp.prevalence = sp.label ? spec.marker_prevalence : 0.0;
    if (spec.severity_scaled && sp.label)
      sp.prevalence = spec.marker_prevalence * (sp.phq8 - 9) / 15.0;
    if (spec.marker_kind == MarkerKind::Pair)
      sp.prevalence = spec.marker_prevalence; // both classes carry bursts

    // the gate and burst noise are drawn even when unused so every speaker
    // consumes the same random stream layout
    const int hop = static_cast<int>(std::lround(FrameSpec{}.hop * (static_cast<double>(rate) / kPipelineRate)));
    const auto gate = detail::block_gate(n, hop, sp.prevalence, rng);
    detail::SpectralShaper shaper(n);
    std::vector<std::pair<int, int>> bursts = {{spec.marker_band_lo, spec.marker_band_hi}};
    if (spec.marker_kind == MarkerKind::Pair) {
      const int gap = sp.label ? spec.pair_gap : spec.decoy_gap;
      bursts.push_back({spec.marker_band_lo + gap, spec.marker_band_hi + gap});
    }
    std::vector<double> mix = base;
    const double gain = std::pow(10.0, spec.marker_gain_db / 10.0) - 1.0;
    for (const auto &[lo, hi] : bursts) {
      std::vector<double> white(n);
      for (auto &w : white)
        w = standard_normal(rng);
      if (sp.prevalence <= 0.0)
        continue;
      const auto [f_lo, f_hi] = detail::band_hz(lo, hi);
      const double baseline = shaper.band_power(base, rate, f_lo, f_hi);
      auto burst = shaper.band_pass(white, rate, f_lo, f_hi);
      // while the gate is open the band carries (1 + gain) x its baseline power
      const double scale = std::sqrt(gain * baseline / detail::mean_power(burst));
      for (std::size_t s = 0; s < n; ++s)
        mix[s] += gate[s] * scale * burst[s];
    }

    double peak = 0.0;
    for (double v : mix)
      peak = std::max(peak, std::abs(v));
    const double level = uniform(rng, 0.3, 0.7);
    sp.audio.sample_rate = rate;
    sp.audio.source_id = sp.speaker_id;
    sp.audio.samples.resize(n);
    for (std::size_t s = 0; s < n; ++s)
      sp.audio.samples[s] = std::clamp(mix[s] / peak * level, -1.0, 1.0);
    out.push_back(std::move(sp));
  }
  return out;
}

/// Write one PCM16 WAV per speaker plus manifest.csv; returns the manifest path.
inline std::filesystem::path synth_corpus(const SynthSpec &spec, const std::filesystem::path &out_dir) {
  spec.validate();
  const auto speakers = synth_speakers(spec);
  std::filesystem::create_directories(out_dir / "audio");
  const auto manifest = out_dir / "manifest.csv";
  std::ofstream m(manifest, std::ios::trunc);
  if (!m)
    fail(Errc::IoError, "cannot write " + manifest.string());
  m << "speaker_id,audio_path,phq8\n";
  for (const auto &sp : speakers) {
    const std::string rel = "audio/" + sp.speaker_id + ".wav";
    write_wav(sp.audio, out_dir / rel, WavEncoding::Pcm16);
    m << sp.speaker_id << ',' << rel << ',' << sp.phq8 << '\n';
  }
  return manifest;
}

/// In-memory corpus: speakers analysed directly, no files involved. Audio goes
/// through the same PCM16 quantisation a written corpus would see.
inline std::vector<SpeakerRecord> synth_records(const SynthSpec &spec, const FrameSpec &frame = {}) {
  const FilterBank fb = build_mel_filterbank(frame, kPipelineRate);
  std::vector<SpeakerRecord> out;
  for (auto &sp : synth_speakers(spec)) {
    SpeakerRecord r;
    r.speaker_id = sp.speaker_id;
    r.phq8 = sp.phq8;
    r.label = sp.label;
    r.audio_paths = {sp.speaker_id};
    const auto bytes = encode_wav(sp.audio, WavEncoding::Pcm16);
    auto rec = analyse_recording(decode_wav(bytes, sp.speaker_id), frame, fb);
    for (int s = 0; s < fragment_count(rec.frames); ++s)
      r.fragments.push_back({0, s});
    r.recordings.push_back(std::move(rec));
    r.indexed = true;
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace stsc
