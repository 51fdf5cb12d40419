#pragma once

// Frequency bands over RoPE chunks and the analytic similarity-decay curves
// they induce. Low chunk index = high frequency.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ropefreq/errors.hpp"
#include "ropefreq/rope.hpp"

namespace ropefreq {

/// Half-open range [begin, end) of chunk indices.
struct ChunkRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t d) const { return d >= begin && d < end; }
  friend bool operator==(ChunkRange, ChunkRange) = default;
};

struct Band {
  std::string label;
  ChunkRange range;
  friend bool operator==(const Band&, const Band&) = default;
};

/// Ordered, disjoint, labeled chunk ranges. `axis` is set when the partition
/// was built over a single axis.
class BandPartition {
 public:
  BandPartition() = default;
  explicit BandPartition(std::vector<Band> bands, std::optional<Axis> axis = std::nullopt)
      : bands_(std::move(bands)), axis_(axis) {
    std::set<std::string> labels;
    for (std::size_t i = 0; i < bands_.size(); ++i) {
      const Band& b = bands_[i];
      if (b.range.empty()) throw ConfigError("band '" + b.label + "' is empty");
      if (!labels.insert(b.label).second) throw ConfigError("duplicate band label '" + b.label + "'");
      if (i > 0 && bands_[i - 1].range.end > b.range.begin) {
        throw ConfigError("bands must be disjoint and ordered by chunk index");
      }
    }
  }

  const std::vector<Band>& bands() const { return bands_; }
  std::size_t size() const { return bands_.size(); }
  std::optional<Axis> axis() const { return axis_; }

  const Band& at(const std::string& label) const {
    for (const Band& b : bands_) {
      if (b.label == label) return b;
    }
    throw ConfigError("no band labeled '" + label + "'");
  }

  /// True when the bands cover every chunk of `config` exactly once.
  bool covers(const RotaryConfig& config) const {
    std::size_t next = 0;
    for (const Band& b : bands_) {
      if (b.range.begin != next) return false;
      next = b.range.end;
    }
    return next == config.n_chunks();
  }

  friend bool operator==(const BandPartition&, const BandPartition&) = default;

 private:
  std::vector<Band> bands_;
  std::optional<Axis> axis_;
};

inline std::vector<std::string> default_band_labels(std::size_t n_bands) {
  switch (n_bands) {
    case 1: return {"full"};
    case 2: return {"high", "low"};
    case 3: return {"high", "mid", "low"};
    default: break;
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n_bands; ++i) labels.push_back("band" + std::to_string(i));
  return labels;
}

/// Splits the chunks of one axis into `n_bands` contiguous ranges whose sizes
/// differ by at most one; leftover chunks go to the highest-frequency bands.
inline BandPartition make_even_partition(const RotaryConfig& config, std::size_t n_bands, Axis axis,
                                         std::string_view label_prefix = {}) {
  const auto& chunks = config.axis_chunks(axis);
  if (n_bands == 0) throw ConfigError("n_bands must be positive");
  if (n_bands > chunks.size()) {
    throw ConfigError("n_bands " + std::to_string(n_bands) + " exceeds the " +
                      std::to_string(chunks.size()) + " chunks on axis " + to_string(axis));
  }
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    if (chunks[i] != chunks[i - 1] + 1) {
      throw ConfigError(std::string("axis ") + to_string(axis) + " chunks are not contiguous");
    }
  }
  const auto labels = default_band_labels(n_bands);
  const std::size_t base = chunks.size() / n_bands;
  const std::size_t extra = chunks.size() % n_bands;
  std::vector<Band> bands;
  std::size_t begin = chunks.front();
  for (std::size_t i = 0; i < n_bands; ++i) {
    const std::size_t width = base + (i < extra ? 1 : 0);
    bands.push_back({std::string(label_prefix) + labels[i], {begin, begin + width}});
    begin += width;
  }
  return BandPartition(std::move(bands), axis);
}

/// A partition over all chunks of a 2-D config: `n_bands` bands per spatial
/// axis, labeled "x/high", "y/low", ..., plus one "temporal" band when the
/// config has temporal chunks.
inline BandPartition make_spectral_partition(const RotaryConfig& config, std::size_t n_bands) {
  std::vector<Band> all;
  for (Axis axis : {Axis::x, Axis::y}) {
    if (config.axis_chunks(axis).empty()) continue;
    const auto p = make_even_partition(config, n_bands, axis, std::string(to_string(axis)) + "/");
    all.insert(all.end(), p.bands().begin(), p.bands().end());
  }
  const auto& t = config.axis_chunks(Axis::temporal);
  if (!t.empty()) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i] != t[i - 1] + 1) throw ConfigError("temporal chunks are not contiguous");
    }
    all.push_back({"temporal", {t.front(), t.back() + 1}});
  }
  std::sort(all.begin(), all.end(), [](const Band& a, const Band& b) { return a.range.begin < b.range.begin; });
  return BandPartition(std::move(all));
}

/// Mean of cos(delta * theta_d) over the chunks of `band`: the normalized
/// inner product of two identical vectors shifted by delta, per band.
inline double mean_band_similarity(double delta, ChunkRange band, const RotaryConfig& config) {
  if (band.empty()) throw ConfigError("mean_band_similarity: empty band");
  if (band.end > config.n_chunks()) throw ConfigError("mean_band_similarity: band exceeds chunk count");
  double acc = 0.0;
  for (std::size_t d = band.begin; d < band.end; ++d) acc += std::cos(delta * config.theta(d));
  return acc / static_cast<double>(band.size());
}

/// FNV-1a over a canonical text form of the config and axis.
inline std::uint64_t config_fingerprint(const RotaryConfig& config, std::optional<Axis> axis) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", config.rope_base());
  std::string text = "dim=" + std::to_string(config.dim()) + ";base=" + buf + ";layout=" +
                     (config.layout() == FrequencyLayout::global ? "global" : "per_axis");
  for (Axis a : {Axis::x, Axis::y, Axis::temporal}) {
    text += std::string(";") + to_string(a) + "=";
    for (std::size_t d : config.axis_chunks(a)) text += std::to_string(d) + ",";
  }
  text += ";axis=" + std::string(axis ? to_string(*axis) : "-");
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct DecayCurve {
  std::vector<std::int64_t> deltas;
  std::vector<std::string> labels;                // band order, "full" last if present
  std::vector<std::vector<double>> series;        // series[i][j]: labels[i] at deltas[j]
  std::uint64_t config_fingerprint = 0;

  const std::vector<double>& at(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return series[i];
    }
    throw ConfigError("decay curve has no series '" + label + "'");
  }
};

inline DecayCurve decay_curve(std::int64_t delta_begin, std::int64_t delta_end, const BandPartition& partition,
                              const RotaryConfig& config, bool include_full) {
  if (delta_end < delta_begin) throw ConfigError("decay_curve: empty delta range");
  if (partition.size() == 0) throw ConfigError("decay_curve: partition has no bands");
  DecayCurve curve;
  curve.config_fingerprint = config_fingerprint(config, partition.axis());
  for (std::int64_t delta = delta_begin; delta <= delta_end; ++delta) curve.deltas.push_back(delta);

  for (const Band& band : partition.bands()) {
    curve.labels.push_back(band.label);
    auto& s = curve.series.emplace_back();
    for (std::int64_t delta : curve.deltas) {
      s.push_back(mean_band_similarity(static_cast<double>(delta), band.range, config));
    }
  }
  if (include_full) {
    curve.labels.push_back("full");
    auto& s = curve.series.emplace_back();
    for (std::int64_t delta : curve.deltas) {
      double acc = 0.0;
      std::size_t count = 0;
      for (const Band& band : partition.bands()) {
        for (std::size_t d = band.range.begin; d < band.range.end; ++d) {
          acc += std::cos(static_cast<double>(delta) * config.theta(d));
          ++count;
        }
      }
      s.push_back(acc / static_cast<double>(count));
    }
  }
  return curve;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `delta,band,mean_similarity` rows ordered by delta, then band order.
inline void write_csv(std::ostream& os, const DecayCurve& curve) {
  os << "delta,band,mean_similarity\n";
  for (std::size_t j = 0; j < curve.deltas.size(); ++j) {
    for (std::size_t i = 0; i < curve.labels.size(); ++i) {
      os << curve.deltas[j] << ',' << curve.labels[i] << ',' << format_double(curve.series[i][j]) << '\n';
    }
  }
}

struct BandMaskMode {
  enum class Kind { zero, scale };
  Kind kind = Kind::zero;
  double factor = 0.0;

  static BandMaskMode zero() { return {Kind::zero, 0.0}; }
  static BandMaskMode scale(double s) { return {Kind::scale, s}; }
  double multiplier() const { return kind == Kind::zero ? 0.0 : factor; }
  friend bool operator==(BandMaskMode, BandMaskMode) = default;
};

inline void band_mask_inplace(std::span<double> vec, ChunkRange band, BandMaskMode mode,
                              const RotaryConfig& config) {
  detail::check_width(vec, config, "band_mask");
  if (band.end > config.n_chunks()) throw ConfigError("band_mask: band exceeds chunk count");
  const double m = mode.multiplier();
  for (std::size_t d = band.begin; d < band.end; ++d) {
    vec[2 * d] *= m;
    vec[2 * d + 1] *= m;
  }
}

inline std::vector<double> band_mask(std::span<const double> vec, ChunkRange band, BandMaskMode mode,
                                     const RotaryConfig& config) {
  std::vector<double> out(vec.begin(), vec.end());
  band_mask_inplace(out, band, mode, config);
  return out;
}

}  // namespace ropefreq
