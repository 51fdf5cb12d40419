#pragma once

// File-driven shared-attention experiments: a JSON config describes the
// rotary layout, synthetic scene and sharing mode (optionally a sweep over one
// parameter); running it yields one report entry per sweep value.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ropefreq/attention.hpp"
#include "ropefreq/bands.hpp"
#include "ropefreq/diagnostics.hpp"
#include "ropefreq/json_io.hpp"
#include "ropefreq/sharing.hpp"
#include "ropefreq/synthetic.hpp"

namespace ropefreq {

struct SceneParams {
  std::string permutation = "shuffle";  // identity | shuffle | shift_by
  std::int64_t shift_k = 0;
  double noise_level = 0.1;
  double shared_component = 0.0;
  std::uint64_t seed = 1;
  friend bool operator==(const SceneParams&, const SceneParams&) = default;
};

struct SweepSpec {
  std::string parameter;  // s | s_hf | s_lf | beta | step
  std::vector<double> values;
  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct OutputSpec {
  std::optional<std::string> report;
  std::optional<std::string> attention_prefix;
  bool band_attribution = false;
  std::size_t attribution_bands = 3;
  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct ExperimentConfig {
  RotaryConfig rotary = RotaryConfig::default_2d(128);
  GridShape grid{8, 8};
  std::size_t heads = 1;
  std::size_t text_tokens = 0;
  std::uint64_t seed = 7;
  SceneParams scene;
  SharingParams sharing;
  std::optional<std::size_t> step;
  std::optional<SweepSpec> sweep;
  OutputSpec outputs;
};

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.rotary == b.rotary && a.grid == b.grid && a.heads == b.heads && a.text_tokens == b.text_tokens &&
         a.seed == b.seed && a.scene == b.scene && a.sharing == b.sharing && a.step == b.step &&
         a.sweep == b.sweep && a.outputs == b.outputs;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["rotary"] = to_json(c.rotary);
  j["grid"] = {{"width", c.grid.width}, {"height", c.grid.height}};
  j["heads"] = c.heads;
  j["text_tokens"] = c.text_tokens;
  j["seed"] = c.seed;
  json scene{{"permutation", c.scene.permutation}};
  if (c.scene.permutation == "shift_by") scene["shift_k"] = c.scene.shift_k;
  scene["noise_level"] = c.scene.noise_level;
  scene["shared_component"] = c.scene.shared_component;
  scene["seed"] = c.scene.seed;
  j["scene"] = scene;
  j["sharing"] = to_json(c.sharing);
  if (c.step) j["step"] = *c.step;
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  json out{{"band_attribution", c.outputs.band_attribution}, {"attribution_bands", c.outputs.attribution_bands}};
  if (c.outputs.report) out["report"] = *c.outputs.report;
  if (c.outputs.attention_prefix) out["attention_prefix"] = *c.outputs.attention_prefix;
  j["outputs"] = out;
  return j;
}

inline void validate(const ExperimentConfig& c);

inline ExperimentConfig experiment_from_json(const json& j) {
  StrictObject o(j, "config");
  ExperimentConfig c;
  c.rotary = rotary_from_json(o.raw("rotary"));
  {
    StrictObject g(o.raw("grid"), "grid");
    c.grid = {g.get<std::size_t>("width"), g.get<std::size_t>("height")};
    g.finish();
  }
  c.heads = o.get_or<std::size_t>("heads", 1);
  c.text_tokens = o.get_or<std::size_t>("text_tokens", 0);
  c.seed = o.get_or<std::uint64_t>("seed", 7);
  if (o.has("scene")) {
    StrictObject s(o.raw("scene"), "scene");
    c.scene.permutation = s.get_or<std::string>("permutation", "shuffle");
    if (c.scene.permutation == "shift_by") c.scene.shift_k = s.get<std::int64_t>("shift_k");
    c.scene.noise_level = s.get_or<double>("noise_level", 0.1);
    c.scene.shared_component = s.get_or<double>("shared_component", 0.0);
    c.scene.seed = s.get_or<std::uint64_t>("seed", 1);
    s.finish();
  }
  c.sharing = sharing_from_json(o.raw("sharing"));
  if (o.has("step")) c.step = o.get<std::size_t>("step");
  if (o.has("sweep")) {
    StrictObject s(o.raw("sweep"), "sweep");
    c.sweep = SweepSpec{s.get<std::string>("parameter"), s.get<std::vector<double>>("values")};
    s.finish();
  }
  if (o.has("outputs")) {
    StrictObject out(o.raw("outputs"), "outputs");
    if (out.has("report")) c.outputs.report = out.get<std::string>("report");
    if (out.has("attention_prefix")) c.outputs.attention_prefix = out.get<std::string>("attention_prefix");
    c.outputs.band_attribution = out.get_or<bool>("band_attribution", false);
    c.outputs.attribution_bands = out.get_or<std::size_t>("attribution_bands", 3);
    out.finish();
  }
  o.finish();
  validate(c);
  return c;
}

inline ExperimentConfig parse_experiment(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_from_json(j);
}

inline PermutationKind permutation_of(const SceneParams& s) {
  if (s.permutation == "identity") return PermutationKind::identity();
  if (s.permutation == "shuffle") return PermutationKind::shuffle();
  if (s.permutation == "shift_by") return PermutationKind::shift_by(s.shift_k);
  throw ConfigError("scene.permutation: unknown value '" + s.permutation + "'");
}

/// Sharing parameters and step for one sweep value.
struct SweepPoint {
  std::string label;
  std::optional<double> value;
  SharingParams sharing;
  std::optional<std::size_t> step;
};

inline SweepPoint apply_sweep(const ExperimentConfig& c, std::optional<double> value) {
  SweepPoint p{"base", value, c.sharing, c.step};
  if (!value) return p;
  const std::string& name = c.sweep->parameter;
  p.label = name + "=" + format_double(*value);
  if (name == "step") {
    if (*value < 0 || *value != static_cast<double>(static_cast<std::size_t>(*value))) {
      throw ConfigError("sweep: step values must be non-negative integers");
    }
    p.step = static_cast<std::size_t>(*value);
    return p;
  }
  if (name == "s") {
    if (auto* plain = std::get_if<PlainSharing>(&p.sharing.mode)) {
      plain->s = *value;
    } else if (auto* sh = std::get_if<ShiftedSharing>(&p.sharing.mode)) {
      sh->s = *value;
    } else {
      throw ConfigError("sweep: parameter 's' needs plain or shifted sharing");
    }
    if (!(*value > 0.0)) throw ConfigError("sweep: s must be positive");
    return p;
  }
  auto* fa = std::get_if<FrequencyAwareSharing>(&p.sharing.mode);
  if (fa == nullptr) throw ConfigError("sweep: parameter '" + name + "' needs frequency_aware sharing");
  if (name == "s_hf") fa->schedule.s_hf = *value;
  else if (name == "s_lf") fa->schedule.s_lf = *value;
  else if (name == "beta") fa->schedule.beta = *value;
  else throw ConfigError("sweep: unknown parameter '" + name + "'");
  fa->schedule.validate();
  return p;
}

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
  std::vector<SweepPoint> points;
  if (!c.sweep) {
    points.push_back(apply_sweep(c, std::nullopt));
    return points;
  }
  for (double v : c.sweep->values) points.push_back(apply_sweep(c, v));
  return points;
}

/// Full validation of a config, including every sweep point, so a run either
/// completes or fails before producing anything.
inline void validate(const ExperimentConfig& c) {
  if (c.grid.width == 0 || c.grid.height == 0) throw ConfigError("grid: width and height must be positive");
  if (c.heads == 0 || c.rotary.dim() % (2 * c.heads) != 0) {
    throw ConfigError("heads: dim must be divisible by 2*heads");
  }
  if (c.grid.size() < 2 && c.sharing.adain_enabled) throw ConfigError("adain needs at least 2 reference tokens");
  if (!(c.scene.shared_component >= 0.0 && c.scene.shared_component < 1.0)) {
    throw ConfigError("scene.shared_component must lie in [0, 1)");
  }
  if (!(c.scene.noise_level >= 0.0)) throw ConfigError("scene.noise_level must be >= 0");
  permutation_of(c.scene);
  if (c.sweep && c.sweep->values.empty()) throw ConfigError("sweep: values must not be empty");
  if (c.outputs.band_attribution && c.outputs.attribution_bands == 0) {
    throw ConfigError("outputs.attribution_bands must be positive");
  }
  for (const SweepPoint& p : sweep_points(c)) {
    const auto scales = reference_scales(p.sharing, c.rotary, p.step);
    (void)scales;
    if (p.step) {
      const auto* fa = std::get_if<FrequencyAwareSharing>(&p.sharing.mode);
      if (fa == nullptr || !fa->ramp) throw ConfigError("step requires frequency_aware sharing with a ramp");
      if (*p.step >= fa->ramp->total_steps) throw ConfigError("step outside the ramp's total_steps");
    }
  }
  if (c.outputs.band_attribution) make_spectral_partition(c.rotary, c.outputs.attribution_bands);
}

struct ExperimentEntry {
  SweepPoint point;
  AttentionReport report;
  AlignmentMetrics alignment;
  std::optional<BandAttribution> attribution;
  std::vector<double> reference_scales;
};

struct ExperimentScene {
  PlantedScene scene;
  TokenSet text;
};

inline ExperimentScene build_scene(const ExperimentConfig& c) {
  const TokenSet base = make_grid(c.grid.width, c.grid.height, c.rotary.dim(), c.seed, c.scene.shared_component);
  ExperimentScene s{plant_scene(base, permutation_of(c.scene), c.scene.noise_level, c.scene.seed),
                    make_text_tokens(c.text_tokens, c.rotary.dim(), c.seed + 1)};
  return s;
}

inline std::vector<ExperimentEntry> run_experiment(const ExperimentConfig& c) {
  validate(c);
  const ExperimentScene s = build_scene(c);
  std::vector<ExperimentEntry> entries;
  for (const SweepPoint& p : sweep_points(c)) {
    ExperimentEntry e{p, {}, {}, std::nullopt, {}};
    e.report = shared_attention(s.scene.target, s.text, s.scene.reference, p.sharing, c.rotary, c.heads, p.step,
                                AttendOptions{c.outputs.band_attribution});
    e.alignment = compute_alignment(e.report, s.scene);
    if (c.outputs.band_attribution) {
      e.attribution = band_attribution(e.report, make_spectral_partition(c.rotary, c.outputs.attribution_bands));
    }
    if (!std::holds_alternative<NoSharing>(p.sharing.mode)) e.reference_scales = reference_scales(p.sharing, c.rotary, p.step);
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Report JSON. `attention_files` holds the data file name written for each
/// entry, or is empty when raw matrices are not written.
inline json experiment_report(const ExperimentConfig& c, const std::vector<ExperimentEntry>& entries,
                              const std::vector<std::string>& attention_files = {}) {
  json report;
  report["config"] = to_json(c);
  json arr = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ExperimentEntry& e = entries[i];
    json entry{{"label", e.point.label}};
    if (e.point.value) entry["sweep_value"] = *e.point.value;
    if (e.point.step) entry["step"] = *e.point.step;
    entry["sharing"] = to_json(e.point.sharing);
    entry["alignment"] = to_json(e.alignment);
    if (e.attribution) entry["band_attribution"] = to_json(*e.attribution);
    entry["reference_scales"] = e.reference_scales;
    entry["shape"] = {e.report.n_queries(), e.report.n_keys()};
    entry["notes"] = e.report.notes;
    if (i < attention_files.size()) entry["attention_file"] = attention_files[i];
    arr.push_back(entry);
  }
  report["entries"] = arr;
  return report;
}

}  // namespace ropefreq
