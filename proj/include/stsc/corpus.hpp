// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsc/audio.hpp"
#include "stsc/error.hpp"
#include "stsc/features.hpp"
#include "stsc/random.hpp"

namespace stsc {

inline constexpr int kDepressionCutoff = 10;
inline constexpr int kPhq8Max = 24;
inline constexpr double kMinRecordingSeconds = 3.0;

inline int phq8_label(int phq8) { return phq8 >= kDepressionCutoff ? 1 : 0; }

/// One analysed recording: band-major normalized spectrogram (n_bands x frames),
/// values already mapped to [0, 1].
struct IndexedRecording {
  std::string path;
  double duration_seconds = 0.0;
  int frames = 0;
  int n_bands = 0;
  std::vector<float> band_major;

  float at(int band, int frame) const {
    return band_major[static_cast<std::size_t>(band) * frames + frame];
  }
};

struct FragmentRef {
  int recording = 0;
  int start_frame = 0;
};

struct SpeakerRecord {
  std::string speaker_id;
  std::vector<std::string> audio_paths;
  int phq8 = 0;
  int label = 0;
  // filled by index_corpus; recordings shorter than kMinRecordingSeconds are
  // kept for bookkeeping but contribute no fragments
  std::vector<IndexedRecording> recordings;
  std::vector<FragmentRef> fragments;
  bool indexed = false;

  MelFragment fragment(const FragmentRef &ref, int width = kFragmentFrames) const {
    const auto &rec = recordings.at(static_cast<std::size_t>(ref.recording));
    require(ref.start_frame >= 0 && ref.start_frame + width <= rec.frames, Errc::InvalidArgument,
            "fragment reference outside recording");
    MelFragment f;
    f.n_bands = rec.n_bands;
    f.n_frames = width;
    f.values.resize(static_cast<std::size_t>(rec.n_bands) * width);
    for (int b = 0; b < rec.n_bands; ++b)
      std::copy_n(rec.band_major.begin() +
                      static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * rec.frames +
                                                  ref.start_frame),
                  width, f.values.begin() + static_cast<std::ptrdiff_t>(b) * width);
    f.origin = {rec.path, ref.start_frame};
    return f;
  }
};

/// N fragments drawn from a single speaker, in draw order.
struct FragmentBatch {
  std::string speaker_id;
  int label = 0;
  std::vector<MelFragment> fragments;
};

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto end = s.find_last_not_of(ws);
  s.erase(end == std::string::npos ? 0 : end + 1);
  return s;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace detail

/// Parse a `speaker_id,audio_path,phq8` CSV. Relative audio paths resolve
/// against the manifest's directory. Speakers come back sorted by id.
inline std::vector<SpeakerRecord> parse_manifest(std::istream &in,
                                                 const std::filesystem::path &base_dir = {}) {
  std::string line;
  if (!std::getline(in, line))
    fail(Errc::MissingColumn, "manifest is empty");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string &name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name)
        return i;
    fail(Errc::MissingColumn, "manifest lacks column '" + name + "'");
  };
  const std::size_t c_id = column("speaker_id"), c_path = column("audio_path"),
                    c_phq = column("phq8");

  std::map<std::string, SpeakerRecord> by_id;
  std::set<std::string> seen_paths;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    const auto cells = detail::split_csv_line(line);
    const std::size_t need = std::max({c_id, c_path, c_phq}) + 1;
    if (cells.size() < need)
      fail(Errc::MissingColumn, "manifest line " + std::to_string(line_no) + " has too few cells");
    const std::string id = detail::trim(cells[c_id]);
    std::string path = detail::trim(cells[c_path]);
    const std::string phq_text = detail::trim(cells[c_phq]);
    int phq = 0;
    std::size_t used = 0;
    try {
      phq = std::stoi(phq_text, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used == 0 || used != phq_text.size())
      fail(Errc::Phq8OutOfRange, "line " + std::to_string(line_no) + ": phq8 '" + phq_text +
                                     "' is not an integer");
    if (phq < 0 || phq > kPhq8Max)
      fail(Errc::Phq8OutOfRange,
           "line " + std::to_string(line_no) + ": phq8 " + std::to_string(phq) + " not in [0, 24]");
    if (!base_dir.empty() && std::filesystem::path(path).is_relative())
      path = (base_dir / path).lexically_normal().string();
    if (!seen_paths.insert(path).second)
      fail(Errc::DuplicatePath, "audio path listed twice: " + path);

    auto [it, fresh] = by_id.try_emplace(id);
    auto &rec = it->second;
    if (fresh) {
      rec.speaker_id = id;
      rec.phq8 = phq;
      rec.label = phq8_label(phq);
    } else if (rec.phq8 != phq) {
      fail(Errc::Phq8OutOfRange, "speaker " + id + " has conflicting phq8 scores");
    }
    rec.audio_paths.push_back(path);
  }
  std::vector<SpeakerRecord> out;
  out.reserve(by_id.size());
  for (auto &[_, rec] : by_id)
    out.push_back(std::move(rec));
  return out;
}

inline std::vector<SpeakerRecord> load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(Errc::FileNotFound, path.string());
  return parse_manifest(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Indexing

/// Audio -> 8 kHz -> dB mel spectrogram -> band-major [0, 1] matrix.
inline IndexedRecording analyse_recording(const AudioBuffer &raw, const FrameSpec &spec,
                                          const FilterBank &fb) {
  IndexedRecording rec;
  rec.path = raw.source_id;
  rec.duration_seconds = raw.duration_seconds();
  if (rec.duration_seconds < kMinRecordingSeconds)
    return rec;
  const AudioBuffer buf = resample(raw, kPipelineRate);
  const MelSpectrogram mel = melspectrogram_db(buf, spec, fb);
  rec.frames = mel.frames;
  rec.n_bands = mel.n_mels;
  rec.band_major.resize(static_cast<std::size_t>(rec.frames) * rec.n_bands);
  for (int t = 0; t < rec.frames; ++t)
    for (int b = 0; b < rec.n_bands; ++b)
      rec.band_major[static_cast<std::size_t>(b) * rec.frames + t] = normalize_db(mel.at(t, b));
  return rec;
}

/// Cache file for a recording, keyed by its path string.
inline std::filesystem::path fragment_cache_path(const std::filesystem::path &cache_dir,
                                                 const std::string &audio_path) {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.stfc",
                static_cast<unsigned long long>(detail::fnv1a(audio_path)));
  return cache_dir / name;
}

/// Rebuild the band-major matrix from overlapping hop-1 fragments.
inline IndexedRecording recording_from_fragments(const std::vector<MelFragment> &frags,
                                                 const std::string &path, double duration) {
  IndexedRecording rec;
  rec.path = path;
  rec.duration_seconds = duration;
  if (frags.empty())
    return rec;
  const int width = frags[0].n_frames;
  rec.n_bands = frags[0].n_bands;
  rec.frames = static_cast<int>(frags.size()) + width - 1;
  rec.band_major.resize(static_cast<std::size_t>(rec.frames) * rec.n_bands);
  for (int t = 0; t < rec.frames; ++t) {
    const int i = std::min<int>(t, static_cast<int>(frags.size()) - 1);
    const int col = t - i;
    for (int b = 0; b < rec.n_bands; ++b)
      rec.band_major[static_cast<std::size_t>(b) * rec.frames + t] = frags[static_cast<std::size_t>(i)].at(b, col);
  }
  return rec;
}

inline std::vector<MelFragment> recording_fragments(const IndexedRecording &rec) {
  std::vector<MelFragment> out;
  const int count = fragment_count(rec.frames);
  SpeakerRecord tmp;
  tmp.recordings.push_back(rec);
  for (int i = 0; i < count; ++i)
    out.push_back(tmp.fragment({0, i}));
  return out;
}

/// Load audio for every speaker and build its fragment index. When
/// `cache_dir` is non-empty, fragment caches there are read if present and
/// written otherwise.
inline void index_corpus(std::vector<SpeakerRecord> &records, const FrameSpec &spec = {},
                         const std::filesystem::path &cache_dir = {}) {
  const FilterBank fb = build_mel_filterbank(spec, kPipelineRate);
  if (!cache_dir.empty())
    std::filesystem::create_directories(cache_dir);
  for (auto &sp : records) {
    sp.recordings.clear();
    sp.fragments.clear();
    for (const auto &path : sp.audio_paths) {
      IndexedRecording rec;
      const auto cached = cache_dir.empty() ? std::filesystem::path{}
                                            : fragment_cache_path(cache_dir, path);
      if (!cached.empty() && std::filesystem::exists(cached)) {
        const auto frags = read_fragment_cache(cached, path);
        const double frames = frags.empty() ? 0.0 : double(frags.size() + kFragmentFrames - 1);
        rec = recording_from_fragments(frags, path, frames * spec.hop / kPipelineRate);
      } else {
        rec = analyse_recording(load_wav(path), spec, fb);
        if (!cached.empty())
          write_fragment_cache(recording_fragments(rec), cached);
      }
      const int rec_index = static_cast<int>(sp.recordings.size());
      const int count = fragment_count(rec.frames);
      for (int s = 0; s < count; ++s)
        sp.fragments.push_back({rec_index, s});
      sp.recordings.push_back(std::move(rec));
    }
    sp.indexed = true;
  }
}

inline int count_depressed(const std::vector<SpeakerRecord> &records) {
  return static_cast<int>(std::count_if(records.begin(), records.end(),
                                         [](const SpeakerRecord &r) { return r.label == 1; }));
}

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  int k = 3;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;

  int fold_of(const std::string &speaker) const {
    const auto it = assignment.find(speaker);
    require(it != assignment.end(), Errc::InvalidArgument, "speaker not in fold plan: " + speaker);
    return it->second;
  }

  nlohmann::json to_json() const {
    return {{"k", k}, {"seed", seed}, {"assignment", assignment}};
  }

  static FoldPlan from_json(const nlohmann::json &j) {
    FoldPlan p;
    p.k = j.at("k").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.assignment = j.at("assignment").get<std::map<std::string, int>>();
    return p;
  }
};

template <typename V> void shuffle_in_place(std::vector<V> &v, Rng &rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// Class-stratified speaker-level folds. Depressed speakers are dealt
/// round-robin first; healthy speakers continue from where that left off, so
/// total fold sizes also differ by at most one.
inline FoldPlan make_folds(const std::vector<SpeakerRecord> &records, int k, std::uint64_t seed) {
  require(k >= 2, Errc::InvalidArgument, "fold count must be >= 2");
  std::vector<std::string> pos, neg;
  for (const auto &r : records)
    (r.label == 1 ? pos : neg).push_back(r.speaker_id);
  if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k)
    fail(Errc::TooFewSpeakers, "need at least " + std::to_string(k) + " speakers per class, have " +
                                   std::to_string(pos.size()) + " depressed / " +
                                   std::to_string(neg.size()) + " healthy");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  Rng rng(derive_seed(seed, 0xF01D));
  shuffle_in_place(pos, rng);
  shuffle_in_place(neg, rng);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::size_t slot = 0;
  for (const auto *group : {&pos, &neg})
    for (const auto &id : *group)
      plan.assignment[id] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
  return plan;
}

/// Speakers of `records` on one side of a fold split, in record order.
inline std::vector<const SpeakerRecord *> select_fold(const std::vector<SpeakerRecord> &records,
                                                      const FoldPlan &plan, int fold,
                                                      bool held_out) {
  require(fold >= 0 && fold < plan.k, Errc::InvalidArgument, "fold index out of range");
  std::vector<const SpeakerRecord *> out;
  for (const auto &r : records)
    if ((plan.fold_of(r.speaker_id) == fold) == held_out)
      out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

/// Positions into record.fragments: without replacement when the index holds
/// at least n entries, otherwise n independent uniform draws.
inline std::vector<std::size_t> sample_fragment_indices(const SpeakerRecord &record, int n,
                                                        Rng &rng) {
  require(n >= 1, Errc::InvalidArgument, "fragment count must be >= 1");
  const std::size_t size = record.fragments.size();
  if (size == 0)
    fail(Errc::NoFragments, "speaker " + record.speaker_id + " has no recording of at least 3 s");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(n));
  if (size >= static_cast<std::size_t>(n)) {
    // partial Fisher-Yates; draw i picks uniformly from the remaining pool
    std::vector<std::size_t> pool(size);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < n; ++i) {
      const std::size_t j = i + uniform_index(rng, size - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      out.push_back(pool[static_cast<std::size_t>(i)]);
    }
  } else {
    for (int i = 0; i < n; ++i)
      out.push_back(uniform_index(rng, size));
  }
  return out;
}

inline FragmentBatch sample_fragments(const SpeakerRecord &record, int n, Rng &rng) {
  FragmentBatch batch;
  batch.speaker_id = record.speaker_id;
  batch.label = record.label;
  for (std::size_t i : sample_fragment_indices(record, n, rng))
    batch.fragments.push_back(record.fragment(record.fragments[i]));
  return batch;
}

} // namespace stsc
