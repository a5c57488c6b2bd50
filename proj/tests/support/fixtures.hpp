// SPDX-License-Identifier: Apache-2.0
//
// Small builders shared by the unit tests.
#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "stsc/corpus.hpp"
#include "stsc/random.hpp"

namespace stsc::fixtures {

/// The Errc of the stsc::Error thrown by `f`, or nothing if it did not throw.
inline std::optional<Errc> error_code(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  return std::nullopt;
}

class TempDir {
public:
  explicit TempDir(const std::string &name)
      : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
};

/// Speaker with one already-indexed recording of `frames` frames of seeded
/// uniform [0, 1] values (the normalized fragment range).
inline SpeakerRecord random_speaker(const std::string &id, int frames, std::uint64_t seed,
                                    int phq8 = 0, int bands = 128) {
  SpeakerRecord r;
  r.speaker_id = id;
  r.phq8 = phq8;
  r.label = phq8_label(phq8);
  r.audio_paths = {id + ".wav"};
  IndexedRecording rec;
  rec.path = id + ".wav";
  rec.frames = frames;
  rec.n_bands = bands;
  rec.duration_seconds = frames / 16.0;
  rec.band_major.resize(static_cast<std::size_t>(frames) * bands);
  Rng rng(seed);
  for (auto &v : rec.band_major)
    v = static_cast<float>(uniform01(rng));
  r.recordings.push_back(std::move(rec));
  for (int s = 0; s < fragment_count(frames); ++s)
    r.fragments.push_back({0, s});
  r.indexed = true;
  return r;
}

/// A cohort of random speakers where depressed speakers carry a raised block
/// of bands [lo, hi) in a fraction of their frames; enough signal for short
/// training runs to separate the classes.
inline std::vector<SpeakerRecord> marked_cohort(int n, int depressed, int frames,
                                                std::uint64_t seed, int lo = 40, int hi = 48,
                                                int bands = 128) {
  std::vector<SpeakerRecord> out;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "P%03d", i);
    const bool dep = i < depressed;
    auto sp = random_speaker(id, frames, derive_seed(seed, static_cast<std::uint64_t>(i)),
                             dep ? 10 + i % 15 : i % 10, bands);
    if (dep) {
      auto &rec = sp.recordings[0];
      for (int b = lo; b < hi && b < bands; ++b)
        for (int t = 0; t < frames; t += 2)
          rec.band_major[static_cast<std::size_t>(b) * frames + t] = 1.0f;
    }
    out.push_back(std::move(sp));
  }
  return out;
}

} // namespace stsc::fixtures
