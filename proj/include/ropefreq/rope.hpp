#pragma once

// Rotary positional embeddings over 2-D token grids.
//
// An embedding of width D is viewed as D/2 chunks; chunk d is the consecutive
// pair (v[2d], v[2d+1]). Implementations that pair v[i] with v[i + D/2]
// (half-split layout) must permute their vectors before using these kernels.
//
// Each chunk belongs to exactly one axis partition. x-chunks rotate by
// pos.x * theta_d, y-chunks by pos.y * theta_d, temporal chunks never rotate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ropefreq/errors.hpp"

namespace ropefreq {

enum class Axis { x, y, temporal };

inline const char* to_string(Axis axis) {
  switch (axis) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::temporal: return "temporal";
  }
  return "?";
}

/// How theta_d is indexed.
///  global:   theta_d = base^(-2d/D) over the global chunk index d.
///  per_axis: each axis restarts the series, theta_j = base^(-j/n_axis) for
///            the j-th chunk of an axis holding n_axis chunks (Flux-style).
enum class FrequencyLayout { global, per_axis };

struct Position2D {
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend Position2D operator+(Position2D a, Position2D b) { return {a.x + b.x, a.y + b.y}; }
  friend Position2D operator-(Position2D a, Position2D b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(Position2D, Position2D) = default;
};

struct Chunk {
  double a = 0.0;
  double b = 0.0;
  friend bool operator==(Chunk, Chunk) = default;
};

/// Chunk indices assigned to each axis. Each list is kept sorted.
struct AxialPartition {
  std::vector<std::size_t> x;
  std::vector<std::size_t> y;
  std::vector<std::size_t> temporal;
  friend bool operator==(const AxialPartition&, const AxialPartition&) = default;
};

class RotaryConfig {
 public:
  /// Throws ConfigError unless dim is positive and even, rope_base > 1 and the
  /// partition covers {0..dim/2-1} exactly once.
  RotaryConfig(std::size_t dim, double rope_base, AxialPartition partition,
               FrequencyLayout layout = FrequencyLayout::global)
      : dim_(dim), rope_base_(rope_base), partition_(std::move(partition)), layout_(layout) {
    validate();
    build_tables();
  }

  /// x = first half of the chunks, y = second half, no temporal chunks.
  static RotaryConfig default_2d(std::size_t dim, double rope_base = 10000.0) {
    check_dim(dim);
    const std::size_t n = dim / 2;
    AxialPartition p;
    for (std::size_t d = 0; d < n; ++d) (d < (n + 1) / 2 ? p.x : p.y).push_back(d);
    return {dim, rope_base, std::move(p)};
  }

  /// Every chunk on one spatial axis; the 1-D sequence case.
  static RotaryConfig one_axis(std::size_t dim, double rope_base = 10000.0, Axis axis = Axis::x) {
    check_dim(dim);
    if (axis == Axis::temporal) throw ConfigError("one_axis: axis must be x or y");
    AxialPartition p;
    auto& target = axis == Axis::x ? p.x : p.y;
    target.resize(dim / 2);
    std::iota(target.begin(), target.end(), std::size_t{0});
    return {dim, rope_base, std::move(p)};
  }

  /// Flux-like layout: the first dim/16 chunks are an unrotated temporal
  /// block, the rest split evenly into x then y, with per-axis frequencies.
  /// dim=128 gives 8 temporal, 28 x and 28 y chunks.
  static RotaryConfig flux_like(std::size_t dim = 128, double rope_base = 10000.0) {
    check_dim(dim);
    const std::size_t n = dim / 2;
    const std::size_t n_t = n / 8;
    if ((n - n_t) % 2 != 0 || n - n_t < 2) {
      throw ConfigError("flux_like: dim " + std::to_string(dim) + " cannot be split evenly");
    }
    const std::size_t n_axis = (n - n_t) / 2;
    AxialPartition p;
    for (std::size_t d = 0; d < n; ++d) {
      if (d < n_t) p.temporal.push_back(d);
      else if (d < n_t + n_axis) p.x.push_back(d);
      else p.y.push_back(d);
    }
    return {dim, rope_base, std::move(p), FrequencyLayout::per_axis};
  }

  std::size_t dim() const { return dim_; }
  std::size_t n_chunks() const { return dim_ / 2; }
  double rope_base() const { return rope_base_; }
  FrequencyLayout layout() const { return layout_; }
  const AxialPartition& partition() const { return partition_; }

  Axis axis_of(std::size_t chunk) const { return axis_of_.at(chunk); }
  double theta(std::size_t chunk) const { return thetas_.at(chunk); }
  const std::vector<double>& thetas() const { return thetas_; }

  const std::vector<std::size_t>& axis_chunks(Axis axis) const {
    switch (axis) {
      case Axis::x: return partition_.x;
      case Axis::y: return partition_.y;
      case Axis::temporal: return partition_.temporal;
    }
    return partition_.temporal;
  }

  friend bool operator==(const RotaryConfig& a, const RotaryConfig& b) {
    return a.dim_ == b.dim_ && a.rope_base_ == b.rope_base_ && a.partition_ == b.partition_ &&
           a.layout_ == b.layout_;
  }

 private:
  static void check_dim(std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
      throw ConfigError("rotary dim must be a positive even integer, got " + std::to_string(dim));
    }
  }

  void validate() {
    check_dim(dim_);
    if (!(rope_base_ > 1.0) || !std::isfinite(rope_base_)) {
      throw ConfigError("rope_base must be finite and > 1");
    }
    std::vector<int> seen(n_chunks(), 0);
    for (auto* list : {&partition_.x, &partition_.y, &partition_.temporal}) {
      std::sort(list->begin(), list->end());
      for (std::size_t d : *list) {
        if (d >= n_chunks()) {
          throw ConfigError("axial partition: chunk index " + std::to_string(d) +
                            " out of range for dim " + std::to_string(dim_));
        }
        if (seen[d]++ != 0) {
          throw ConfigError("axial partition: chunk " + std::to_string(d) + " assigned twice");
        }
      }
    }
    for (std::size_t d = 0; d < seen.size(); ++d) {
      if (seen[d] == 0) throw ConfigError("axial partition: chunk " + std::to_string(d) + " unassigned");
    }
  }

  void build_tables() {
    const std::size_t n = n_chunks();
    const double theta_base = 1.0 / rope_base_;
    axis_of_.assign(n, Axis::temporal);
    thetas_.assign(n, 0.0);
    for (std::size_t d : partition_.x) axis_of_[d] = Axis::x;
    for (std::size_t d : partition_.y) axis_of_[d] = Axis::y;

    if (layout_ == FrequencyLayout::global) {
      for (std::size_t d = 0; d < n; ++d) {
        thetas_[d] = std::pow(theta_base, 2.0 * static_cast<double>(d) / static_cast<double>(dim_));
      }
      return;
    }
    for (const auto* list : {&partition_.x, &partition_.y, &partition_.temporal}) {
      const double n_axis = static_cast<double>(list->size());
      for (std::size_t j = 0; j < list->size(); ++j) {
        thetas_[(*list)[j]] = std::pow(theta_base, static_cast<double>(j) / n_axis);
      }
    }
  }

  std::size_t dim_;
  double rope_base_;
  AxialPartition partition_;
  FrequencyLayout layout_;
  std::vector<Axis> axis_of_;
  std::vector<double> thetas_;
};

/// theta_d for every chunk of `config`.
inline std::vector<double> frequencies(const RotaryConfig& config) { return config.thetas(); }

inline Chunk rotate_chunk(Chunk c, double angle) {
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  return {c.a * cs - c.b * sn, c.a * sn + c.b * cs};
}

inline Chunk chunk_at(std::span<const double> vec, std::size_t d) { return {vec[2 * d], vec[2 * d + 1]}; }

/// Rotation angle of chunk d for a token at (or displaced by) `pos`.
inline double chunk_angle(const RotaryConfig& config, std::size_t d, Position2D pos) {
  switch (config.axis_of(d)) {
    case Axis::x: return static_cast<double>(pos.x) * config.theta(d);
    case Axis::y: return static_cast<double>(pos.y) * config.theta(d);
    case Axis::temporal: return 0.0;
  }
  return 0.0;
}

namespace detail {
inline void check_width(std::span<const double> vec, const RotaryConfig& config, const char* who) {
  if (vec.size() != config.dim()) {
    throw ShapeError(std::string(who) + ": embedding width " + std::to_string(vec.size()) +
                     " != dim " + std::to_string(config.dim()));
  }
}
}  // namespace detail

inline void apply_rope_inplace(std::span<double> vec, Position2D pos, const RotaryConfig& config) {
  detail::check_width(vec, config, "apply_rope");
  for (std::size_t d = 0; d < config.n_chunks(); ++d) {
    if (config.axis_of(d) == Axis::temporal) continue;
    const Chunk r = rotate_chunk(chunk_at(vec, d), chunk_angle(config, d, pos));
    vec[2 * d] = r.a;
    vec[2 * d + 1] = r.b;
  }
}

inline std::vector<double> apply_rope(std::span<const double> vec, Position2D pos,
                                      const RotaryConfig& config) {
  std::vector<double> out(vec.begin(), vec.end());
  apply_rope_inplace(out, pos, config);
  return out;
}

/// sum_d <q_d, R(delta . theta_d) k_d>, with delta = pos_k - pos_q. Equal to the
/// inner product of q rotated at m and k rotated at m + delta, for any m.
inline double relative_inner_product(std::span<const double> q, std::span<const double> k,
                                     Position2D delta, const RotaryConfig& config) {
  detail::check_width(q, config, "relative_inner_product");
  detail::check_width(k, config, "relative_inner_product");
  double acc = 0.0;
  for (std::size_t d = 0; d < config.n_chunks(); ++d) {
    const Chunk qd = chunk_at(q, d);
    const Chunk kd = rotate_chunk(chunk_at(k, d), chunk_angle(config, d, delta));
    acc += qd.a * kd.a + qd.b * kd.b;
  }
  return acc;
}

/// Polar form of one chunk's inner-product term:
///   <q_d, R k_d> = magnitude_product * cos(alpha + rotation_angle).
/// alpha is the signed angle from k_d to q_d; rotation_angle is
/// (pos_q - pos_k) * theta_d along the chunk's axis (0 for temporal chunks).
struct ChunkTerm {
  double magnitude_product = 0.0;
  double alpha = 0.0;
  double rotation_angle = 0.0;
  bool zero_magnitude = false;

  double value() const { return magnitude_product * std::cos(alpha + rotation_angle); }
};

inline std::vector<ChunkTerm> chunk_decomposition(std::span<const double> q, std::span<const double> k,
                                                  Position2D delta, const RotaryConfig& config) {
  detail::check_width(q, config, "chunk_decomposition");
  detail::check_width(k, config, "chunk_decomposition");
  std::vector<ChunkTerm> terms(config.n_chunks());
  for (std::size_t d = 0; d < config.n_chunks(); ++d) {
    const Chunk qd = chunk_at(q, d);
    const Chunk kd = chunk_at(k, d);
    ChunkTerm& t = terms[d];
    t.magnitude_product = std::hypot(qd.a, qd.b) * std::hypot(kd.a, kd.b);
    t.rotation_angle = -chunk_angle(config, d, delta);
    if (t.magnitude_product == 0.0) {
      t.zero_magnitude = true;
      continue;
    }
    // angle(q) - angle(k) via atan2(cross, dot), wrapped to (-pi, pi]
    t.alpha = std::atan2(kd.a * qd.b - kd.b * qd.a, kd.a * qd.a + kd.b * qd.b);
  }
  return terms;
}

inline double reconstruct(std::span<const ChunkTerm> terms) {
  double acc = 0.0;
  for (const ChunkTerm& t : terms) acc += t.value();
  return acc;
}

}  // namespace ropefreq
