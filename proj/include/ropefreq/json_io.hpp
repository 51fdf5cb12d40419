#pragma once

// JSON forms of configs, layouts and metrics, plus the raw attention matrix
// format (little-endian float32, row-major, with a JSON sidecar).

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "ropefreq/attention.hpp"
#include "ropefreq/bands.hpp"
#include "ropefreq/diagnostics.hpp"
#include "ropefreq/errors.hpp"
#include "ropefreq/rope.hpp"
#include "ropefreq/sharing.hpp"

namespace ropefreq {

using json = nlohmann::ordered_json;

/// Failure to read or write a file.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Reads fields of one JSON object and rejects any key that was never asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing field '" + key + "'");
    return convert<T>(key);
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing field '" + key + "'");
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError(where_ + ": unknown field '" + item.key() + "'");
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    used_.insert(key);
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
            throw ConfigError(where_ + "." + key + ": expected a non-negative integer");
          }
        }
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

inline const char* to_string(FrequencyLayout layout) {
  return layout == FrequencyLayout::global ? "global" : "per_axis";
}

inline json to_json(const RotaryConfig& c) {
  return json{{"dim", c.dim()},
              {"rope_base", c.rope_base()},
              {"layout", to_string(c.layout())},
              {"partition",
               {{"x", c.partition().x}, {"y", c.partition().y}, {"temporal", c.partition().temporal}}}};
}

/// Accepts either an explicit "partition" or a "preset" (default_2d,
/// one_axis_x, one_axis_y, flux_like).
inline RotaryConfig rotary_from_json(const json& j) {
  StrictObject o(j, "rotary");
  const auto dim = o.get<std::size_t>("dim");
  const double base = o.get_or<double>("rope_base", 10000.0);
  if (o.has("preset") && o.has("partition")) throw ConfigError("rotary: give either preset or partition, not both");
  if (o.has("partition")) {
    const std::string layout = o.get_or<std::string>("layout", "global");
    if (layout != "global" && layout != "per_axis") throw ConfigError("rotary.layout: unknown value '" + layout + "'");
    StrictObject p(o.raw("partition"), "rotary.partition");
    AxialPartition part{p.get<std::vector<std::size_t>>("x"), p.get<std::vector<std::size_t>>("y"),
                        p.get_or<std::vector<std::size_t>>("temporal", {})};
    p.finish();
    o.finish();
    return {dim, base, std::move(part), layout == "global" ? FrequencyLayout::global : FrequencyLayout::per_axis};
  }
  const std::string preset = o.get_or<std::string>("preset", "default_2d");
  o.finish();
  if (preset == "default_2d") return RotaryConfig::default_2d(dim, base);
  if (preset == "one_axis_x") return RotaryConfig::one_axis(dim, base, Axis::x);
  if (preset == "one_axis_y") return RotaryConfig::one_axis(dim, base, Axis::y);
  if (preset == "flux_like") return RotaryConfig::flux_like(dim, base);
  throw ConfigError("rotary.preset: unknown preset '" + preset + "'");
}

inline json to_json(const TimestepRamp& r) {
  return json{{"s_hf_start", r.s_hf_start}, {"s_hf_end", r.s_hf_end}, {"s_lf_start", r.s_lf_start},
              {"s_lf_end", r.s_lf_end},     {"total_steps", r.total_steps}};
}

inline TimestepRamp ramp_from_json(const json& j) {
  StrictObject o(j, "sharing.ramp");
  TimestepRamp r;
  r.s_hf_start = o.get<double>("s_hf_start");
  r.s_hf_end = o.get<double>("s_hf_end");
  r.s_lf_start = o.get<double>("s_lf_start");
  r.s_lf_end = o.get<double>("s_lf_end");
  r.total_steps = o.get<std::size_t>("total_steps");
  o.finish();
  if (r.total_steps == 0) throw ConfigError("sharing.ramp.total_steps must be positive");
  return r;
}

inline const char* mode_name(const SharingMode& mode) {
  switch (mode.index()) {
    case 0: return "none";
    case 1: return "plain";
    case 2: return "frequency_aware";
    default: return "shifted";
  }
}

inline json to_json(const SharingParams& p) {
  json j{{"mode", mode_name(p.mode)}};
  if (const auto* plain = std::get_if<PlainSharing>(&p.mode)) {
    j["s"] = plain->s;
  } else if (const auto* fa = std::get_if<FrequencyAwareSharing>(&p.mode)) {
    j["s_hf"] = fa->schedule.s_hf;
    j["s_lf"] = fa->schedule.s_lf;
    j["beta"] = fa->schedule.beta;
    if (fa->ramp) j["ramp"] = to_json(*fa->ramp);
  } else if (const auto* sh = std::get_if<ShiftedSharing>(&p.mode)) {
    j["s"] = sh->s;
    j["offset"] = {sh->offset.x, sh->offset.y};
  }
  j["adain"] = p.adain_enabled;
  if (p.band_mask_override) {
    json ranges = json::array();
    for (const ChunkRange& r : p.band_mask_override->ranges) ranges.push_back({r.begin, r.end});
    json m{{"ranges", ranges},
           {"mode", p.band_mask_override->mode.kind == BandMaskMode::Kind::zero ? "zero" : "scale"}};
    if (p.band_mask_override->mode.kind == BandMaskMode::Kind::scale) m["factor"] = p.band_mask_override->mode.factor;
    j["band_mask"] = m;
  }
  return j;
}

inline SharingParams sharing_from_json(const json& j) {
  StrictObject o(j, "sharing");
  SharingParams p;
  const std::string mode = o.get<std::string>("mode");
  if (mode == "none") {
    p.mode = NoSharing{};
  } else if (mode == "plain") {
    const double s = o.get_or<double>("s", 1.0);
    if (!(s > 0.0)) throw ConfigError("sharing.s must be positive");
    p.mode = PlainSharing{s};
  } else if (mode == "frequency_aware") {
    FrequencyAwareSharing fa;
    fa.schedule.s_hf = o.get<double>("s_hf");
    fa.schedule.s_lf = o.get<double>("s_lf");
    fa.schedule.beta = o.get_or<double>("beta", 2.0);
    fa.schedule.validate();
    if (o.has("ramp")) fa.ramp = ramp_from_json(o.raw("ramp"));
    p.mode = fa;
  } else if (mode == "shifted") {
    ShiftedSharing sh;
    sh.s = o.get_or<double>("s", 1.0);
    if (!(sh.s > 0.0)) throw ConfigError("sharing.s must be positive");
    const auto off = o.get<std::vector<std::int64_t>>("offset");
    if (off.size() != 2) throw ConfigError("sharing.offset must be [x, y]");
    sh.offset = {off[0], off[1]};
    p.mode = sh;
  } else {
    throw ConfigError("sharing.mode: unknown mode '" + mode + "'");
  }
  p.adain_enabled = o.get_or<bool>("adain", false);
  if (o.has("band_mask")) {
    StrictObject m(o.raw("band_mask"), "sharing.band_mask");
    BandMaskOverride override_;
    for (const auto& r : m.get<std::vector<std::vector<std::size_t>>>("ranges")) {
      if (r.size() != 2 || r[1] <= r[0]) throw ConfigError("sharing.band_mask.ranges: expected [begin, end) pairs");
      override_.ranges.push_back({r[0], r[1]});
    }
    const std::string kind = m.get<std::string>("mode");
    if (kind == "zero") {
      override_.mode = BandMaskMode::zero();
    } else if (kind == "scale") {
      override_.mode = BandMaskMode::scale(m.get<double>("factor"));
    } else {
      throw ConfigError("sharing.band_mask.mode: unknown value '" + kind + "'");
    }
    m.finish();
    p.band_mask_override = override_;
  }
  o.finish();
  return p;
}

inline json to_json(const TokenInfo& t) {
  return json{{"source", to_string(t.source)}, {"index", t.index}, {"x", t.position.x}, {"y", t.position.y}};
}

inline json to_json(const std::vector<TokenInfo>& layout) {
  json arr = json::array();
  for (const TokenInfo& t : layout) arr.push_back(to_json(t));
  return arr;
}

inline json to_json(const AlignmentMetrics& m) {
  return json{{"positional_mass", m.positional_mass},
              {"semantic_mass", m.semantic_mass},
              {"argmax_positional_rate", m.argmax_positional_rate},
              {"argmax_semantic_rate", m.argmax_semantic_rate},
              {"reference_mass", m.reference_mass},
              {"target_mass", m.target_mass},
              {"text_mass", m.text_mass},
              {"n_queries", m.n_queries}};
}

inline json to_json(const BandAttribution& a) {
  json bands = json::array();
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    bands.push_back({{"band", a.labels[i]}, {"mean_abs_logit", a.mean_abs[i]}});
  }
  return bands;
}

/// Attention matrix as little-endian IEEE-754 float32, row-major, no header.
inline std::vector<char> encode_attention_f32(const Matrix& attention) {
  std::vector<char> bytes;
  bytes.reserve(attention.data().size() * 4);
  for (double v : attention.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<char>((bits >> shift) & 0xffu));
  }
  return bytes;
}

inline Matrix decode_attention_f32(const std::vector<char>& bytes, std::size_t rows, std::size_t cols) {
  if (bytes.size() != rows * cols * 4) throw ShapeError("decode_attention_f32: byte count does not match shape");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    m(i / cols, i % cols) = static_cast<double>(std::bit_cast<float>(bits));
  }
  return m;
}

inline json attention_sidecar(const AttentionReport& report, const std::string& data_file) {
  return json{{"data_file", data_file},
              {"dtype", "float32"},
              {"byte_order", "little"},
              {"order", "row-major"},
              {"shape", {report.n_queries(), report.n_keys()}},
              {"query_layout", to_json(report.query_layout)},
              {"key_layout", to_json(report.key_layout)}};
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace ropefreq
