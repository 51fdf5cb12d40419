#pragma once

// Shared attention: target queries attend to target keys concatenated with
// (modulated) reference keys. Supports plain scalar sharing, frequency-aware
// per-chunk modulation with optional timestep ramp, and shifted reference
// positions.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ropefreq/attention.hpp"
#include "ropefreq/bands.hpp"
#include "ropefreq/errors.hpp"
#include "ropefreq/matrix.hpp"
#include "ropefreq/rope.hpp"

namespace ropefreq {

/// s_d = s_hf + (s_lf - s_hf) * (d / (n-1))^beta for d in [0, n).
/// The first and last entries are exactly s_hf and s_lf.
inline std::vector<double> modulation_scales(double s_hf, double s_lf, double beta, std::size_t n_chunks_axis) {
  if (n_chunks_axis < 2) throw ConfigError("modulation_scales: need at least 2 chunks per axis");
  if (!(beta > 0.0)) throw ConfigError("modulation_scales: beta must be positive");
  std::vector<double> s(n_chunks_axis);
  const double last = static_cast<double>(n_chunks_axis - 1);
  for (std::size_t d = 0; d < n_chunks_axis; ++d) {
    s[d] = s_hf + (s_lf - s_hf) * std::pow(static_cast<double>(d) / last, beta);
  }
  s.front() = s_hf;
  s.back() = s_lf;
  return s;
}

struct ModulationSchedule {
  double s_hf = 0.3;
  double s_lf = 1.2;
  double beta = 2.0;

  void validate() const {
    if (!std::isfinite(s_hf) || !std::isfinite(s_lf) || !std::isfinite(beta)) {
      throw ConfigError("modulation schedule: non-finite parameter");
    }
    if (!(beta > 0.0)) throw ConfigError("modulation schedule: beta must be positive");
  }

  /// One scale per chunk. Each spatial axis gets its own schedule over its own
  /// chunks, ordered from highest to lowest frequency; temporal chunks use s_lf.
  std::vector<double> per_chunk_scales(const RotaryConfig& config) const {
    validate();
    std::vector<double> out(config.n_chunks(), s_lf);
    for (Axis axis : {Axis::x, Axis::y}) {
      const auto& chunks = config.axis_chunks(axis);
      if (chunks.empty()) continue;
      const auto s = modulation_scales(s_hf, s_lf, beta, chunks.size());
      for (std::size_t j = 0; j < chunks.size(); ++j) out[chunks[j]] = s[j];
    }
    return out;
  }

  friend bool operator==(const ModulationSchedule&, const ModulationSchedule&) = default;
};

struct TimestepRamp {
  double s_hf_start = 0.2;
  double s_hf_end = 0.4;
  double s_lf_start = 1.0;
  double s_lf_end = 1.3;
  std::size_t total_steps = 28;

  friend bool operator==(const TimestepRamp&, const TimestepRamp&) = default;
};

struct RampValues {
  double s_hf = 0.0;
  double s_lf = 0.0;
};

/// Linear interpolation at t / (T-1); T == 1 yields the start values.
inline RampValues ramp_at(const TimestepRamp& ramp, std::size_t t) {
  if (ramp.total_steps == 0) throw ConfigError("ramp: total_steps must be positive");
  if (t >= ramp.total_steps) {
    throw ConfigError("ramp: step " + std::to_string(t) + " outside [0, " + std::to_string(ramp.total_steps) + ")");
  }
  if (ramp.total_steps == 1 || t == 0) return {ramp.s_hf_start, ramp.s_lf_start};
  if (t == ramp.total_steps - 1) return {ramp.s_hf_end, ramp.s_lf_end};
  const double f = static_cast<double>(t) / static_cast<double>(ramp.total_steps - 1);
  return {ramp.s_hf_start + (ramp.s_hf_end - ramp.s_hf_start) * f,
          ramp.s_lf_start + (ramp.s_lf_end - ramp.s_lf_start) * f};
}

inline std::vector<Position2D> shift_positions(const std::vector<Position2D>& positions, Position2D offset) {
  std::vector<Position2D> out;
  out.reserve(positions.size());
  for (Position2D p : positions) out.push_back(p + offset);
  return out;
}

struct NoSharing {
  friend bool operator==(const NoSharing&, const NoSharing&) = default;
};

struct PlainSharing {
  double s = 1.0;
  friend bool operator==(const PlainSharing&, const PlainSharing&) = default;
};

struct FrequencyAwareSharing {
  ModulationSchedule schedule;
  std::optional<TimestepRamp> ramp;
  friend bool operator==(const FrequencyAwareSharing&, const FrequencyAwareSharing&) = default;
};

struct ShiftedSharing {
  Position2D offset;
  double s = 1.0;
  friend bool operator==(const ShiftedSharing&, const ShiftedSharing&) = default;
};

using SharingMode = std::variant<NoSharing, PlainSharing, FrequencyAwareSharing, ShiftedSharing>;

/// Masking applied to reference keys on top of the sharing mode.
struct BandMaskOverride {
  std::vector<ChunkRange> ranges;
  BandMaskMode mode;
  friend bool operator==(const BandMaskOverride&, const BandMaskOverride&) = default;
};

struct SharingParams {
  SharingMode mode = NoSharing{};
  bool adain_enabled = false;
  std::optional<BandMaskOverride> band_mask_override;
  friend bool operator==(const SharingParams&, const SharingParams&) = default;
};

/// Per-chunk multipliers for the rotated reference keys.
inline std::vector<double> reference_scales(const SharingParams& params, const RotaryConfig& config,
                                            std::optional<std::size_t> step) {
  std::vector<double> scales(config.n_chunks(), 1.0);
  if (const auto* plain = std::get_if<PlainSharing>(&params.mode)) {
    scales.assign(config.n_chunks(), plain->s);
  } else if (const auto* shifted = std::get_if<ShiftedSharing>(&params.mode)) {
    scales.assign(config.n_chunks(), shifted->s);
  } else if (const auto* fa = std::get_if<FrequencyAwareSharing>(&params.mode)) {
    ModulationSchedule schedule = fa->schedule;
    if (fa->ramp && step) {
      const RampValues v = ramp_at(*fa->ramp, *step);
      schedule.s_hf = v.s_hf;
      schedule.s_lf = v.s_lf;
    }
    scales = schedule.per_chunk_scales(config);
  }
  if (params.band_mask_override) {
    const double m = params.band_mask_override->mode.multiplier();
    for (const ChunkRange& r : params.band_mask_override->ranges) {
      if (r.end > config.n_chunks()) throw ConfigError("band mask override exceeds chunk count");
      for (std::size_t d = r.begin; d < r.end; ++d) scales[d] *= m;
    }
  }
  return scales;
}

/// Multiplies chunk d of `vec` by scales[d].
inline void modulate_inplace(std::span<double> vec, std::span<const double> scales) {
  if (vec.size() != 2 * scales.size()) throw ShapeError("modulate: scale count does not match chunk count");
  for (std::size_t d = 0; d < scales.size(); ++d) {
    vec[2 * d] *= scales[d];
    vec[2 * d + 1] *= scales[d];
  }
}

struct SharedQKV {
  Matrix queries;  // rotated
  Matrix keys;     // rotated; reference rows modulated
  Matrix values;
  std::vector<TokenInfo> query_layout;
  std::vector<TokenInfo> key_layout;
  std::vector<double> reference_scales;
  std::vector<std::string> notes;
};

/// Assembles shared-attention inputs:
///   Q = RoPE(target_img' + target_txt)
///   K = RoPE(target_img' + target_txt) + scales * RoPE(reference at its positions)
///   V = target_img + target_txt + reference
/// where target_img' is AdaIN(target, reference) when enabled. With NoSharing
/// the reference is ignored entirely.
inline SharedQKV build_shared_qkv(const TokenSet& target, const TokenSet& target_text, const TokenSet& reference,
                                  const SharingParams& params, const RotaryConfig& config,
                                  std::optional<std::size_t> step = std::nullopt) {
  if (target.modality != Modality::image || reference.modality != Modality::image) {
    throw ConfigError("build_shared_qkv: target and reference must be image tokens");
  }
  if (target_text.modality != Modality::text) throw ConfigError("build_shared_qkv: target_text must be text tokens");
  target.validate();
  target_text.validate();
  for (const TokenSet* t : {&target, &target_text}) {
    if (t->size() > 0 && t->dim() != config.dim()) throw ShapeError("build_shared_qkv: token width != rotary dim");
  }
  const bool sharing = !std::holds_alternative<NoSharing>(params.mode);
  if (const auto* plain = std::get_if<PlainSharing>(&params.mode); plain && !(plain->s > 0.0)) {
    throw ConfigError("plain sharing: s must be positive");
  }

  SharedQKV out;
  Matrix target_qk = target.features;
  if (sharing) {
    reference.validate();
    if (reference.dim() != config.dim()) throw ShapeError("build_shared_qkv: reference width != rotary dim");
    if (target.grid != reference.grid || target.size() != reference.size()) {
      throw ShapeError("build_shared_qkv: target and reference grids differ");
    }
    if (params.adain_enabled) target_qk = adain(target.features, reference.features);
  }

  Matrix tq = target_qk;
  for (std::size_t i = 0; i < tq.rows(); ++i) apply_rope_inplace(tq.row(i), target.positions[i], config);
  Matrix txt = target_text.features;
  for (std::size_t i = 0; i < txt.rows(); ++i) apply_rope_inplace(txt.row(i), target_text.positions[i], config);

  out.queries = vstack(tq, txt);
  out.keys = out.queries;
  out.values = vstack(target.features, target_text.features);
  for (std::size_t i = 0; i < target.size(); ++i) {
    out.query_layout.push_back({TokenSource::target_image, i, target.positions[i]});
  }
  for (std::size_t i = 0; i < target_text.size(); ++i) {
    out.query_layout.push_back({TokenSource::target_text, i, target_text.positions[i]});
  }
  out.key_layout = out.query_layout;
  if (!sharing) return out;

  std::vector<Position2D> ref_positions = reference.positions;
  if (const auto* shifted = std::get_if<ShiftedSharing>(&params.mode)) {
    if (shifted->offset == Position2D{}) {
      out.notes.push_back("shifted mode with zero offset degenerates to plain sharing");
    }
    if (!(shifted->s > 0.0)) throw ConfigError("shifted sharing: s must be positive");
    ref_positions = shift_positions(ref_positions, shifted->offset);
  }
  out.reference_scales = reference_scales(params, config, step);

  Matrix rk = reference.features;
  for (std::size_t j = 0; j < rk.rows(); ++j) {
    apply_rope_inplace(rk.row(j), ref_positions[j], config);
    modulate_inplace(rk.row(j), out.reference_scales);
    out.key_layout.push_back({TokenSource::reference_image, j, ref_positions[j]});
  }
  out.keys = vstack(out.keys, rk);
  out.values = vstack(out.values, reference.features);
  return out;
}

/// build_shared_qkv followed by attention.
inline AttentionReport shared_attention(const TokenSet& target, const TokenSet& target_text, const TokenSet& reference,
                                        const SharingParams& params, const RotaryConfig& config, std::size_t heads,
                                        std::optional<std::size_t> step = std::nullopt, AttendOptions options = {}) {
  SharedQKV qkv = build_shared_qkv(target, target_text, reference, params, config, step);
  AttentionReport report = attend_rotated(qkv.queries, qkv.keys, qkv.values, config, heads, options);
  report.query_layout = std::move(qkv.query_layout);
  report.key_layout = std::move(qkv.key_layout);
  report.notes = std::move(qkv.notes);
  return report;
}

}  // namespace ropefreq
