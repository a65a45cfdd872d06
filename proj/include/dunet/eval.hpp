#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/dataset.hpp"
#include "dunet/error.hpp"
#include "dunet/model.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

inline constexpr double kSdrCap = 100.0;
inline constexpr double kSilenceMeanSquare = 1e-6;
inline constexpr std::size_t kSdrWindow = 22050;

/// 10 log10(|ref|^2 / |ref - est|^2), clamped to [-100, 100] dB.
template <typename Scalar>
double sdr(std::span<const Scalar> reference, std::span<const Scalar> estimate) {
  if (reference.size() != estimate.size())
    throw DimensionError("sdr: reference has " + std::to_string(reference.size()) + " samples, estimate " +
                         std::to_string(estimate.size()));
  double signal = 0, error = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference[i], d = r - static_cast<double>(estimate[i]);
    signal += r * r;
    error += d * d;
  }
  if (signal == 0) throw ContractError("sdr: reference is all zero; filter silence before scoring");
  if (error == 0) return kSdrCap;
  return std::clamp(10.0 * std::log10(signal / error), -kSdrCap, kSdrCap);
}

template <typename Scalar>
double sdr(const Tensor<Scalar>& reference, const Tensor<Scalar>& estimate) {
  if (reference.shape() != estimate.shape())
    throw DimensionError("sdr: reference " + shape_str(reference.shape()) + " vs estimate " +
                         shape_str(estimate.shape()));
  return sdr<Scalar>(reference.data(), estimate.data());
}

struct WindowScores {
  std::vector<double> scores;  // non-silent windows, in time order
  std::size_t silent = 0;
  std::size_t total = 0;
};

/// Scores non-overlapping windows of [C, T] signals. A trailing partial window
/// is dropped unless the signal is shorter than one window, in which case the
/// whole signal is one window. Windows whose reference mean square is below
/// 1e-6 are counted as silent and not scored.
template <typename Scalar>
WindowScores windowed_sdr(const Tensor<Scalar>& reference, const Tensor<Scalar>& estimate,
                          std::size_t window = kSdrWindow) {
  if (reference.shape() != estimate.shape() || reference.rank() != 2)
    throw DimensionError("windowed_sdr: reference " + shape_str(reference.shape()) + " vs estimate " +
                         shape_str(estimate.shape()));
  if (window == 0) throw ParameterError("windowed_sdr: window must be >= 1");
  const std::size_t C = reference.dim(0), T = reference.dim(1);
  WindowScores out;
  if (T == 0) return out;
  const std::size_t len = T < window ? T : window;
  const std::size_t count = T < window ? 1 : T / window;
  std::vector<Scalar> ref(C * len), est(C * len);
  for (std::size_t w = 0; w < count; ++w) {
    double energy = 0;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < len; ++t) {
        ref[c * len + t] = reference.at(c, w * len + t);
        est[c * len + t] = estimate.at(c, w * len + t);
        energy += static_cast<double>(ref[c * len + t]) * ref[c * len + t];
      }
    ++out.total;
    if (energy / static_cast<double>(C * len) < kSilenceMeanSquare || energy == 0) {
      ++out.silent;
      continue;
    }
    out.scores.push_back(sdr<Scalar>(ref, est));
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Runs the model over a whole [C, T] signal in consecutive segments; the
/// last segment is zero-padded and its output trimmed. Returns [K, C, T].
template <typename Scalar>
Tensor<Scalar> separate_track(const Model<Scalar>& model, const Tensor<Scalar>& mixture) {
  const auto& cfg = model.config();
  if (mixture.rank() != 2 || mixture.dim(0) != cfg.channels)
    throw DimensionError("mixture " + shape_str(mixture.shape()) + " does not have the model's " +
                         std::to_string(cfg.channels) + " channel(s)");
  const std::size_t C = cfg.channels, T = mixture.dim(1), L = cfg.segment_length, K = cfg.sources;
  Tensor<Scalar> out({K, C, T});
  Tensor<Scalar> seg({C, L});
  for (std::size_t start = 0; start < T; start += L) {
    const std::size_t n = std::min(L, T - start);
    seg.fill(Scalar(0));
    for (std::size_t c = 0; c < C; ++c) std::copy_n(mixture.ptr() + c * T + start, n, seg.ptr() + c * L);
    const auto est = model.separate(seg);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c) std::copy_n(est.ptr() + (k * C + c) * L, n, out.ptr() + (k * C + c) * T + start);
  }
  return out;
}

struct SourceScore {
  std::string source;
  double mean_sdr = 0;
  double median_sdr = 0;
  std::size_t windows = 0;
  std::size_t silent_windows = 0;
};

struct TrackScores {
  std::string track;
  std::vector<std::string> sources;
  std::vector<WindowScores> windows;  // one per source
};

struct SdrReport {
  std::vector<SourceScore> sources;
  std::vector<TrackScores> tracks;
};

/// Window scores for every source of one track. refs and ests are [K, C, T].
template <typename Scalar>
TrackScores score_track(const std::string& name, const std::vector<std::string>& sources, const Tensor<Scalar>& refs,
                        const Tensor<Scalar>& ests, std::size_t window = kSdrWindow) {
  if (refs.shape() != ests.shape() || refs.rank() != 3 || refs.dim(0) != sources.size())
    throw DimensionError("track '" + name + "': references " + shape_str(refs.shape()) + " vs estimates " +
                         shape_str(ests.shape()));
  TrackScores out{name, sources, {}};
  const Shape one{refs.dim(1), refs.dim(2)};
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const auto r = refs.row(k), e = ests.row(k);
    out.windows.push_back(windowed_sdr(Tensor<Scalar>(one, std::vector<Scalar>(r.begin(), r.end())),
                                       Tensor<Scalar>(one, std::vector<Scalar>(e.begin(), e.end())), window));
  }
  return out;
}

namespace detail {
inline std::size_t report_rank(const std::string& source, std::size_t fallback) {
  const auto it = std::find(kMusdbStems.begin(), kMusdbStems.end(), source);
  return it == kMusdbStems.end() ? kMusdbStems.size() + fallback : static_cast<std::size_t>(it - kMusdbStems.begin());
}
}  // namespace detail

/// Pools windows of all tracks per source. Rows follow vocals, drums, bass,
/// other; any other names come after in their given order.
inline SdrReport aggregate(const std::vector<std::string>& sources, std::vector<TrackScores> tracks) {
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detail::report_rank(sources[a], a) < detail::report_rank(sources[b], b);
  });
  SdrReport report;
  for (std::size_t k : order) {
    std::vector<double> pooled;
    SourceScore s{sources[k], 0, 0, 0, 0};
    for (const auto& t : tracks) {
      const auto& w = t.windows.at(k);
      pooled.insert(pooled.end(), w.scores.begin(), w.scores.end());
      s.windows += w.total;
      s.silent_windows += w.silent;
    }
    s.mean_sdr = mean_of(pooled);
    s.median_sdr = median_of(std::move(pooled));
    report.sources.push_back(s);
  }
  report.tracks = std::move(tracks);
  return report;
}

/// Separates and scores every track of a split.
template <typename Scalar>
SdrReport evaluate(const Model<Scalar>& model, const TrackSet& set, std::size_t window = kSdrWindow) {
  const auto& cfg = model.config();
  const auto names = cfg.source_names();
  if (set.stem_names.size() != cfg.sources)
    throw DataError("dataset has " + std::to_string(set.stem_names.size()) + " stems but the model separates " +
                    std::to_string(cfg.sources) + " sources");
  std::vector<TrackScores> tracks;
  for (const auto& track : set.tracks) {
    if (track.channels != cfg.channels)
      throw DataError("track '" + track.name + "' has " + std::to_string(track.channels) + " channel(s), model expects " +
                      std::to_string(cfg.channels));
    const auto refs = load_track<Scalar>(track, set.sample_rate);
    const auto ests = separate_track(model, mix_sources(refs));
    tracks.push_back(score_track(track.name, names, refs, ests, window));
  }
  return aggregate(names, std::move(tracks));
}

inline std::string report_csv(const SdrReport& r) {
  std::string s = "source,mean_sdr_db,median_sdr_db,windows,silent_windows\n";
  for (const auto& row : r.sources)
    s += row.source + "," + detail::format_double(row.mean_sdr) + "," + detail::format_double(row.median_sdr) + "," +
         std::to_string(row.windows) + "," + std::to_string(row.silent_windows) + "\n";
  return s;
}

inline std::string track_csv(const SdrReport& r) {
  std::string s = "track,source,mean_sdr_db,median_sdr_db,windows,silent_windows\n";
  for (const auto& t : r.tracks)
    for (std::size_t k = 0; k < t.sources.size(); ++k) {
      const auto& w = t.windows[k];
      s += t.track + "," + t.sources[k] + "," + detail::format_double(mean_of(w.scores)) + "," +
           detail::format_double(median_of(w.scores)) + "," + std::to_string(w.total) + "," +
           std::to_string(w.silent) + "\n";
    }
  return s;
}

inline std::string display_name(const std::string& source) {
  if (source == "vocals") return "Vocal";
  if (source == "drums") return "Drums";
  if (source == "bass") return "Bass";
  if (source == "other") return "Other";
  return source;
}

/// Aligned text table, one row per source.
inline std::string report_table(const SdrReport& r) {
  std::ostringstream os;
  os << "# SDR in dB over 1 s windows, silent windows excluded; median over windows\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %12s %8s %8s\n", "Source", "Mean SDR", "Median SDR", "Windows", "Silent");
  os << line;
  for (const auto& row : r.sources) {
    std::snprintf(line, sizeof line, "%-12s %10.3f %12.3f %8zu %8zu\n", display_name(row.source).c_str(), row.mean_sdr,
                  row.median_sdr, row.windows, row.silent_windows);
    os << line;
  }
  return os.str();
}

}  // namespace dunet
