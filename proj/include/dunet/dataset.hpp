#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dunet/random.hpp"
#include "dunet/wav.hpp"

namespace dunet {

inline constexpr std::uint32_t kTargetRate = 22050;
inline const std::vector<std::string> kMusdbStems = {"vocals", "drums", "bass", "other"};

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

/// One track: a WAV per stem, all with the same rate, length and channel count.
struct TrackEntry {
  std::string name;
  std::vector<std::filesystem::path> stems;
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::uint32_t sample_rate = 0;

  /// Length after conversion to `rate`.
  std::size_t length_at(std::uint32_t rate) const {
    if (rate == sample_rate) return frames;
    return static_cast<std::size_t>(std::llround(static_cast<double>(frames) * rate / sample_rate));
  }
};

struct TrackSet {
  Split split = Split::train;
  std::vector<std::string> stem_names = kMusdbStems;
  std::vector<TrackEntry> tracks;
  std::uint32_t sample_rate = kTargetRate;

  std::size_t size() const { return tracks.size(); }
  bool empty() const { return tracks.empty(); }
};

/// root/<split>/<track>/<stem>.wav. A missing split directory is an empty set;
/// missing stems or inconsistent stems are reported together in one DataError.
inline TrackSet scan_dataset(const std::filesystem::path& root, Split split,
                             const std::vector<std::string>& stem_names = kMusdbStems) {
  namespace fs = std::filesystem;
  TrackSet set;
  set.split = split;
  set.stem_names = stem_names;
  const fs::path dir = root / to_string(split);
  if (!fs::is_directory(dir)) return set;

  std::vector<fs::path> track_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) track_dirs.push_back(e.path());
  std::sort(track_dirs.begin(), track_dirs.end());

  std::vector<std::string> problems;
  for (const auto& td : track_dirs) {
    TrackEntry entry;
    entry.name = td.filename().string();
    bool ok = true;
    for (const auto& stem : stem_names) {
      const fs::path p = td / (stem + ".wav");
      if (!fs::is_regular_file(p)) {
        problems.push_back("track '" + entry.name + "': missing stem '" + stem + "'");
        ok = false;
        continue;
      }
      WavInfo info;
      try {
        info = read_wav_info(p);
      } catch (const FormatError& e) {
        problems.push_back("track '" + entry.name + "': stem '" + stem + "': " + e.what());
        ok = false;
        continue;
      }
      if (entry.stems.empty()) {
        entry.frames = info.frames;
        entry.channels = info.channels;
        entry.sample_rate = info.sample_rate;
      } else if (info.frames != entry.frames || info.channels != entry.channels ||
                 info.sample_rate != entry.sample_rate) {
        problems.push_back("track '" + entry.name + "': stem '" + stem + "' differs in length, channels or rate");
        ok = false;
      }
      entry.stems.push_back(p);
    }
    if (ok) set.tracks.push_back(std::move(entry));
  }
  if (!problems.empty()) {
    std::string msg = "dataset '" + dir.string() + "' has " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return set;
}

/// Linear interpolation onto the grid t' * from / to, T' = round(T * to / from),
/// holding the last sample past the end. A convenience for odd inputs; feed
/// 22050 Hz audio for real work.
template <typename Scalar>
Tensor<Scalar> resample_linear(const Tensor<Scalar>& x, std::uint32_t from_hz, std::uint32_t to_hz) {
  if (from_hz == 0 || to_hz == 0) throw ParameterError("sample rates must be positive");
  if (from_hz == to_hz) return x;
  const std::size_t channels = x.dim(0), time = x.dim(1);
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(time) * to_hz / from_hz));
  Tensor<Scalar> out({channels, out_len});
  if (time == 0) return out;
  const double step = static_cast<double>(from_hz) / to_hz;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto left = std::min(static_cast<std::size_t>(pos), time - 1);
    const std::size_t right = std::min(left + 1, time - 1);
    const auto frac = static_cast<Scalar>(pos - static_cast<double>(left));
    for (std::size_t c = 0; c < channels; ++c)
      out.at(c, i) = x.at(c, left) + frac * (x.at(c, right) - x.at(c, left));
  }
  return out;
}

/// Stems of `entry` at `rate`, samples [offset, offset + length), as [K, C, length].
template <typename Scalar>
Tensor<Scalar> read_track_slice(const TrackEntry& entry, std::size_t offset, std::size_t length,
                                std::uint32_t rate = kTargetRate) {
  const std::size_t K = entry.stems.size(), C = entry.channels;
  Tensor<Scalar> out({K, C, length});
  for (std::size_t k = 0; k < K; ++k) {
    const WavInfo info = read_wav_info(entry.stems[k]);
    Tensor<Scalar> part;
    if (info.sample_rate == rate) {
      part = read_wav_frames<Scalar>(entry.stems[k], info, offset, length);
    } else {
      // Source frames covering the requested output grid, then interpolate in place.
      const double step = static_cast<double>(info.sample_rate) / rate;
      const auto first = static_cast<std::size_t>(static_cast<double>(offset) * step);
      const std::size_t last = std::min(info.frames, static_cast<std::size_t>((offset + length) * step) + 2);
      const auto src = read_wav_frames<Scalar>(entry.stems[k], info, first, last - first);
      part = Tensor<Scalar>({C, length});
      for (std::size_t i = 0; i < length; ++i) {
        const double pos = static_cast<double>(offset + i) * step - static_cast<double>(first);
        const auto l = std::min(static_cast<std::size_t>(pos), src.dim(1) - 1);
        const std::size_t r = std::min(l + 1, src.dim(1) - 1);
        const auto frac = static_cast<Scalar>(pos - static_cast<double>(l));
        for (std::size_t c = 0; c < C; ++c) part.at(c, i) = src.at(c, l) + frac * (src.at(c, r) - src.at(c, l));
      }
    }
    std::copy(part.data().begin(), part.data().end(), out.row(k).begin());
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> load_track(const TrackEntry& entry, std::uint32_t rate = kTargetRate) {
  return read_track_slice<Scalar>(entry, 0, entry.length_at(rate), rate);
}

/// Sum over the leading (source) axis of a [K, C, T] tensor.
template <typename Scalar>
Tensor<Scalar> mix_sources(const Tensor<Scalar>& sources) {
  const std::size_t K = sources.dim(0);
  Tensor<Scalar> mixture({sources.dim(1), sources.dim(2)});
  for (std::size_t k = 0; k < K; ++k) {
    const auto src = sources.row(k);
    for (std::size_t i = 0; i < mixture.size(); ++i) mixture[i] += src[i];
  }
  return mixture;
}

/// A training example: mixture == sum of sources, element for element.
template <typename Scalar>
struct Segment {
  Tensor<Scalar> sources;  // [K, C, T]
  Tensor<Scalar> mixture;  // [C, T]
  std::string track;
  std::size_t offset = 0;
};

/// A uniformly placed window of one track. Tracks shorter than `length` yield nothing.
template <typename Scalar>
std::optional<Segment<Scalar>> sample_segment(const TrackEntry& track, std::size_t length, Rng& rng,
                                              std::uint32_t rate = kTargetRate) {
  const std::size_t total = track.length_at(rate);
  if (total < length) {
    std::cerr << "warning: track '" << track.name << "' has " << total << " samples, fewer than " << length
              << "; skipped\n";
    return std::nullopt;
  }
  const std::size_t offset = rng.index(total - length + 1);
  Segment<Scalar> s;
  s.sources = read_track_slice<Scalar>(track, offset, length, rate);
  s.mixture = mix_sources(s.sources);
  s.track = track.name;
  s.offset = offset;
  return s;
}

/// Scales every source by its own factor and re-mixes.
template <typename Scalar>
Segment<Scalar> augment_and_mix(Tensor<Scalar> sources, const std::vector<double>& scales) {
  if (scales.size() != sources.dim(0)) throw DimensionError("one scale per source required");
  for (std::size_t k = 0; k < scales.size(); ++k)
    for (auto& v : sources.row(k)) v = static_cast<Scalar>(v * scales[k]);
  Segment<Scalar> s;
  s.mixture = mix_sources(sources);
  s.sources = std::move(sources);
  return s;
}

/// Per-source gains drawn from Uniform[lo, hi] (default [0.7, 1]).
template <typename Scalar>
Segment<Scalar> augment_and_mix(Tensor<Scalar> sources, Rng& rng, double lo = 0.7, double hi = 1.0) {
  std::vector<double> scales(sources.dim(0));
  for (auto& s : scales) s = rng.uniform(lo, hi);
  return augment_and_mix(std::move(sources), scales);
}

/// Loaded tracks or on-disk slices, drawn as augmented training segments.
template <typename Scalar>
class SegmentSampler {
 public:
  /// Tracks are held in memory when their total size is below `cache_bytes`.
  SegmentSampler(const TrackSet& set, std::size_t length, std::size_t cache_bytes = std::size_t{1} << 30)
      : set_(set), length_(length) {
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < set.tracks.size(); ++i) {
      const auto& t = set.tracks[i];
      if (t.length_at(set.sample_rate) < length) {
        std::cerr << "warning: track '" << t.name << "' is shorter than one segment; skipped\n";
        continue;
      }
      eligible_.push_back(i);
      bytes += t.length_at(set.sample_rate) * t.channels * t.stems.size() * sizeof(Scalar);
    }
    if (bytes <= cache_bytes)
      for (std::size_t i : eligible_) cache_.emplace_back(load_track<Scalar>(set.tracks[i], set.sample_rate));
  }

  bool empty() const { return eligible_.empty(); }
  std::size_t length() const { return length_; }

  /// Unaugmented segment from a uniformly chosen track at a uniform offset.
  Segment<Scalar> draw(Rng& rng) const {
    if (eligible_.empty()) throw DataError("no track is long enough for a " + std::to_string(length_) + "-sample segment");
    const std::size_t pick = rng.index(eligible_.size());
    const TrackEntry& track = set_.tracks[eligible_[pick]];
    const std::size_t total = track.length_at(set_.sample_rate);
    const std::size_t offset = rng.index(total - length_ + 1);
    Segment<Scalar> s;
    if (cache_.empty()) {
      s.sources = read_track_slice<Scalar>(track, offset, length_, set_.sample_rate);
    } else {
      const auto& full = cache_[pick];
      const std::size_t K = full.dim(0), C = full.dim(1);
      s.sources = Tensor<Scalar>({K, C, length_});
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < C; ++c)
          std::copy_n(full.ptr() + (k * C + c) * total + offset, length_, s.sources.ptr() + (k * C + c) * length_);
    }
    s.mixture = mix_sources(s.sources);
    s.track = track.name;
    s.offset = offset;
    return s;
  }

  /// draw() followed by per-source gain augmentation.
  Segment<Scalar> draw_augmented(Rng& rng) const {
    Segment<Scalar> raw = draw(rng);
    Segment<Scalar> s = augment_and_mix(std::move(raw.sources), rng);
    s.track = std::move(raw.track);
    s.offset = raw.offset;
    return s;
  }

 private:
  TrackSet set_;
  std::size_t length_;
  std::vector<std::size_t> eligible_;
  std::vector<Tensor<Scalar>> cache_;
};

/// Writes root/<split>/<track>/<stem>.wav for a toy task: each track mixes a
/// low tone (40-80 Hz) and, for K >= 2, higher tones (250-500 Hz, then 1-2 kHz, ...),
/// each with random amplitude in [0.2, 0.45] and random phase. Mono, 22050 Hz, float32.
inline void write_tone_dataset(const std::filesystem::path& root, const std::vector<std::string>& stems,
                               std::size_t tracks_per_split, std::size_t length, std::uint64_t seed) {
  namespace fs = std::filesystem;
  Rng rng({seed, 0x746f6e65});
  for (Split split : {Split::train, Split::validation, Split::test}) {
    for (std::size_t n = 0; n < tracks_per_split; ++n) {
      const fs::path dir = root / to_string(split) / ("track_" + std::to_string(n));
      fs::create_directories(dir);
      for (std::size_t k = 0; k < stems.size(); ++k) {
        const double lo = k == 0 ? 40.0 : 250.0 * std::pow(4.0, static_cast<double>(k - 1));
        const double freq = rng.uniform(lo, 2 * lo);
        const double amp = rng.uniform(0.2, 0.45);
        const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
        Tensor<float> wave({1, length});
        for (std::size_t t = 0; t < length; ++t)
          wave.at(0, t) = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * t / kTargetRate + phase));
        write_wav(dir / (stems[k] + ".wav"), wave, kTargetRate);
      }
    }
  }
}

}  // namespace dunet
