// ropefreq: command-line front end for RoPE frequency-band analysis and
// shared-attention experiments.
//
// Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ropefreq.hpp"

namespace {

using namespace ropefreq;

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitIo = 4;

struct GlobalOptions {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void emit(const GlobalOptions& g, const std::string& content, const std::string& what) {
  if (!g.out) {
    std::cout << content;
    return;
  }
  write_file(*g.out, content);
  if (!g.quiet) std::cerr << "wrote " << what << " to " << *g.out << "\n";
}

Axis parse_axis(const std::string& name) {
  if (name == "x") return Axis::x;
  if (name == "y") return Axis::y;
  throw ConfigError("--axis must be x or y");
}

struct DecayCurveArgs {
  std::size_t dim = 128;
  double rope_base = 10000.0;
  std::size_t bands = 3;
  std::int64_t delta_max = 64;
  std::string axis = "x";
  bool no_full = false;
};

int run_decay_curve(const DecayCurveArgs& a, const GlobalOptions& g) {
  if (a.delta_max < 0) throw ConfigError("--delta-max must be >= 0");
  const Axis axis = parse_axis(a.axis);
  const RotaryConfig config = RotaryConfig::one_axis(a.dim, a.rope_base, axis);
  const BandPartition partition = make_even_partition(config, a.bands, axis);
  const bool include_full = a.bands > 1 && !a.no_full;
  const DecayCurve curve = decay_curve(0, a.delta_max, partition, config, include_full);
  std::ostringstream os;
  write_csv(os, curve);
  emit(g, os.str(), "decay curve");
  return 0;
}

struct ScheduleArgs {
  double s_hf = 0.3;
  double s_lf = 1.2;
  double beta = 2.0;
  std::size_t dim = 128;
  std::string preset = "default_2d";
};

int run_schedule(const ScheduleArgs& a, const GlobalOptions& g) {
  if (!(a.s_hf > 0.0) || !(a.s_lf > 0.0)) throw ConfigError("--s-hf and --s-lf must be positive");
  json rot{{"dim", a.dim}, {"preset", a.preset}};
  const RotaryConfig config = rotary_from_json(rot);
  std::ostringstream os;
  os << "axis,d,s_d\n";
  for (Axis axis : {Axis::x, Axis::y}) {
    const auto n = config.axis_chunks(axis).size();
    if (n == 0) continue;
    const auto s = modulation_scales(a.s_hf, a.s_lf, a.beta, n);
    for (std::size_t d = 0; d < n; ++d) os << to_string(axis) << ',' << d << ',' << format_double(s[d]) << '\n';
  }
  const auto& temporal = config.axis_chunks(Axis::temporal);
  for (std::size_t d = 0; d < temporal.size(); ++d) {
    os << "temporal," << d << ',' << format_double(a.s_lf) << '\n';
  }
  emit(g, os.str(), "schedule");
  return 0;
}

struct BandsArgs {
  std::size_t dim = 128;
  double rope_base = 10000.0;
  std::size_t bands = 3;
  bool as_json = false;
};

int run_bands(const BandsArgs& a, const GlobalOptions& g) {
  const RotaryConfig config = RotaryConfig::one_axis(a.dim, a.rope_base);
  const BandPartition partition = make_even_partition(config, a.bands, Axis::x);
  std::ostringstream os;
  json arr = json::array();
  for (const Band& b : partition.bands()) {
    // theta decreases with chunk index
    const double theta_max = config.theta(b.range.begin);
    const double theta_min = config.theta(b.range.end - 1);
    if (a.as_json) {
      arr.push_back({{"band", b.label},
                     {"first_chunk", b.range.begin},
                     {"last_chunk", b.range.end - 1},
                     {"theta_min", theta_min},
                     {"theta_max", theta_max}});
    } else {
      os << b.label << ' ' << b.range.begin << ".." << (b.range.end - 1) << " theta=[" << format_double(theta_min)
         << ", " << format_double(theta_max) << "]\n";
    }
  }
  if (a.as_json) os << arr.dump(2) << '\n';
  emit(g, os.str(), "bands");
  return 0;
}

struct SharedAttnArgs {
  std::string config_path;
  std::optional<std::string> emit_config;
};

int run_shared_attn(const SharedAttnArgs& a, const GlobalOptions& g) {
  ExperimentConfig config = parse_experiment(read_file(a.config_path));
  if (g.seed) config.seed = *g.seed;
  if (g.out) config.outputs.report = *g.out;
  validate(config);

  const auto entries = run_experiment(config);

  // Everything is computed before the first file is written.
  std::vector<std::string> attention_files;
  std::vector<std::pair<std::string, std::string>> files;
  if (config.outputs.attention_prefix) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const std::string stem = *config.outputs.attention_prefix + "_" + std::to_string(i);
      const auto bytes = encode_attention_f32(entries[i].report.attention);
      files.emplace_back(stem + ".f32", std::string(bytes.begin(), bytes.end()));
      files.emplace_back(stem + ".json", attention_sidecar(entries[i].report, stem + ".f32").dump(2) + "\n");
      attention_files.push_back(stem + ".f32");
    }
  }
  const std::string report = experiment_report(config, entries, attention_files).dump(2) + "\n";
  if (a.emit_config) files.emplace_back(*a.emit_config, to_json(config).dump(2) + "\n");

  for (const auto& [path, content] : files) write_file(path, content);
  if (config.outputs.report) {
    write_file(*config.outputs.report, report);
    if (!g.quiet) std::cerr << "wrote report to " << *config.outputs.report << "\n";
  } else {
    std::cout << report;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RoPE frequency-band analysis and shared-attention experiments"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::string out;
  std::uint64_t seed = 0;
  auto* out_opt = app.add_option("--out", out, "Output file (default: stdout)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the experiment seed");
  app.add_flag("--quiet", g.quiet, "Suppress informational messages");

  DecayCurveArgs dc;
  auto* dc_cmd = app.add_subcommand("decay-curve", "Mean per-band similarity cos(delta*theta_d) as CSV");
  dc_cmd->add_option("--dim", dc.dim, "Embedding width")->capture_default_str();
  dc_cmd->add_option("--rope-base", dc.rope_base, "RoPE base B (theta_base = 1/B)")->capture_default_str();
  dc_cmd->add_option("--bands", dc.bands, "Number of even bands")->capture_default_str();
  dc_cmd->add_option("--delta-max", dc.delta_max, "Largest shift")->capture_default_str();
  dc_cmd->add_option("--axis", dc.axis, "Axis carrying all chunks (x|y)")->capture_default_str();
  dc_cmd->add_flag("--no-full", dc.no_full, "Omit the all-chunk series");

  ScheduleArgs sc;
  auto* sc_cmd = app.add_subcommand("schedule", "Per-chunk frequency-aware modulation scales as CSV");
  sc_cmd->add_option("--s-hf", sc.s_hf, "Scale for the highest-frequency chunk")->capture_default_str();
  sc_cmd->add_option("--s-lf", sc.s_lf, "Scale for the lowest-frequency chunk")->capture_default_str();
  sc_cmd->add_option("--beta", sc.beta, "Polynomial exponent")->capture_default_str();
  sc_cmd->add_option("--dim", sc.dim, "Embedding width")->capture_default_str();
  sc_cmd->add_option("--preset", sc.preset, "Axial layout: default_2d|one_axis_x|flux_like")->capture_default_str();

  BandsArgs bd;
  auto* bd_cmd = app.add_subcommand("bands", "Band chunk ranges and theta extrema");
  bd_cmd->add_option("--dim", bd.dim, "Embedding width")->capture_default_str();
  bd_cmd->add_option("--rope-base", bd.rope_base, "RoPE base B")->capture_default_str();
  bd_cmd->add_option("--bands", bd.bands, "Number of even bands")->capture_default_str();
  bd_cmd->add_flag("--json", bd.as_json, "Print JSON instead of text");

  SharedAttnArgs sa;
  std::string emit_config;
  auto* sa_cmd = app.add_subcommand("shared-attn", "Run a shared-attention experiment from a JSON config");
  sa_cmd->add_option("config", sa.config_path, "Experiment config (JSON)")->required();
  auto* emit_opt = sa_cmd->add_option("--emit-config", emit_config, "Write the normalized config here");

  for (auto* cmd : {dc_cmd, sc_cmd, bd_cmd, sa_cmd}) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (*out_opt) g.out = out;
  if (*seed_opt) g.seed = seed;
  if (*emit_opt) sa.emit_config = emit_config;

  try {
    if (*dc_cmd) return run_decay_curve(dc, g);
    if (*sc_cmd) return run_schedule(sc, g);
    if (*bd_cmd) return run_bands(bd, g);
    if (*sa_cmd) return run_shared_attn(sa, g);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const UnsupportedReport& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
