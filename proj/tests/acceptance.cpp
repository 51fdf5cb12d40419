// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ropefreq.hpp"

namespace fs = std::filesystem;
using namespace ropefreq;

namespace {

const std::string kCli = ROPEFREQ_CLI;
const std::string kFixtures = ROPEFREQ_FIXTURES;

// Frozen from the long-double brute-force oracle on copying_shuffle.json
// (8x8 grid, dim 128, seed 7, shuffle, noise 0.1, shared component 0.8).
struct Frozen {
  double argmax_positional_rate;
  double argmax_semantic_rate;
  double positional_mass;
  double semantic_mass;
};
constexpr Frozen kPlain{0.09375, 0.5625, 0.0078767494008455931, 0.0079185047267223738};
constexpr Frozen kFreqAware{0.015625, 0.9375, 0.0077399949522235954, 0.0077896651504393075};
constexpr double kHighMaskedPositionalMass = 0.0077645183715710722;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& stdout_path) {
  const std::string cmd = "'" + kCli + "' " + args + " > '" + stdout_path.string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

Position2D random_pos(std::mt19937_64& gen, int span) {
  std::uniform_int_distribution<int> u(-span, span);
  return {u(gen), u(gen)};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome rope_identities() {
  Outcome o;
  const auto cfg = RotaryConfig::default_2d(128, 10000.0);
  std::mt19937_64 gen(2024);
  double worst_identity = 0, worst_oracle = 0, worst_iso = 0, worst_add = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_vec(gen, 128);
    const auto k = random_vec(gen, 128);
    const auto m = random_pos(gen, 64);
    const auto n = random_pos(gen, 64);
    const double lhs = dot(apply_rope(q, m, cfg), apply_rope(k, n, cfg));
    const double rhs = relative_inner_product(q, k, n - m, cfg);
    worst_identity = std::max(worst_identity, std::abs(lhs - rhs));
    const auto ld = oracle::dot(oracle::rotated(q, m, cfg), oracle::rotated(k, n, cfg));
    worst_oracle = std::max(worst_oracle, std::abs(rhs - static_cast<double>(ld)));

    const auto rq = apply_rope(q, m, cfg);
    worst_iso = std::max(worst_iso, std::abs(std::sqrt(dot(rq, rq)) - std::sqrt(dot(q, q))));
    const auto two_step = apply_rope(apply_rope(q, n, cfg), m, cfg);
    worst_add = std::max(worst_add, max_abs_diff(two_step, apply_rope(q, m + n, cfg)));
  }
  o.check(worst_identity <= 1e-10, "relative identity err " + num(worst_identity));
  o.check(worst_oracle <= 1e-10, "oracle err " + num(worst_oracle));
  o.check(worst_iso <= 1e-10, "isometry err " + num(worst_iso));
  o.check(worst_add <= 1e-10, "additivity err " + num(worst_add));
  if (o.pass) {
    o.detail = "1000 cases, max err identity " + num(worst_identity) + ", oracle " + num(worst_oracle) +
               ", isometry " + num(worst_iso) + ", additivity " + num(worst_add);
  }
  return o;
}

Outcome polar_decomposition() {
  Outcome o;
  const auto cfg = RotaryConfig::default_2d(128, 10000.0);
  std::mt19937_64 gen(77);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const auto q = random_vec(gen, 128);
    const auto k = random_vec(gen, 128);
    const auto delta = random_pos(gen, 64);
    const auto terms = chunk_decomposition(q, k, delta, cfg);
    worst = std::max(worst, std::abs(reconstruct(terms) - relative_inner_product(q, k, delta, cfg)));
  }
  o.check(worst <= 1e-9, "reconstruction err " + num(worst));
  if (o.pass) o.detail = "200 cases, max err " + num(worst);
  return o;
}

Outcome decay_curve_cli(const fs::path& work) {
  Outcome o;
  const auto out = work / "decay.csv";
  const int code = run_cli("decay-curve", out);
  o.check(code == 0, "exit code " + std::to_string(code));
  if (!o.pass) return o;
  const std::map<std::string, std::pair<std::size_t, std::size_t>> ranges{
      {"high", {0, 22}}, {"mid", {22, 43}}, {"low", {43, 64}}, {"full", {0, 64}}};
  std::map<std::string, std::vector<double>> series;
  std::istringstream lines(slurp(out));
  std::string line;
  std::getline(lines, line);
  o.check(line == "delta,band,mean_similarity", "bad header");
  double worst = 0;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream cs(line);
    std::string d, band, value;
    std::getline(cs, d, ',');
    std::getline(cs, band, ',');
    std::getline(cs, value, ',');
    const auto [b, e] = ranges.at(band);
    const double got = std::stod(value);
    worst = std::max(worst, std::abs(got - static_cast<double>(oracle::mean_cos(std::stold(d), b, e, 128, 10000.0L))));
    series[band].push_back(got);
    ++rows;
  }
  o.check(rows == 65 * 4, "expected 260 rows, got " + std::to_string(rows));
  o.check(worst <= 1e-12, "oracle err " + num(worst));
  if (!o.pass) return o;
  for (std::size_t delta = 1; delta <= 32; ++delta) {
    if (!(series["high"][delta] <= series["mid"][delta] && series["mid"][delta] <= series["low"][delta])) {
      o.check(false, "ordering broken at delta " + std::to_string(delta));
    }
  }
  o.check(series["low"][1] >= 0.99, "low band at delta 1 = " + num(series["low"][1]));
  o.check(series["high"][8] <= 0.5, "high band at delta 8 = " + num(series["high"][8]));
  if (o.pass) {
    o.detail = "oracle err " + num(worst) + ", ordering holds on 1..32, low(1)=" + num(series["low"][1]) +
               ", high(8)=" + num(series["high"][8]);
  }
  return o;
}

Outcome schedule_exactness() {
  Outcome o;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.01, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(gen), b = u(gen), beta = u(gen);
    const auto s = modulation_scales(a, b, beta, 2 + gen() % 128);
    if (s.front() != a || s.back() != b) o.check(false, "endpoint not bitwise exact");
  }
  const auto s = modulation_scales(0.3, 1.5, 2.0, 5);
  const double expected[] = {0.3, 0.375, 0.6, 0.975, 1.5};
  double worst = 0;
  for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(s[i] - expected[i]));
  o.check(worst <= 1e-12, "n=5 vector err " + num(worst));

  const auto cfg = RotaryConfig::default_2d(64);
  const auto scene = plant_scene(make_grid(4, 4, 64, 3, 0.5), PermutationKind::shuffle(), 0.1, 2);
  const auto text = make_text_tokens(2, 64, 4);
  double worst_eq = 0;
  for (double sc : {0.5, 1.0, 1.3}) {
    const auto plain = shared_attention(scene.target, text, scene.reference, {PlainSharing{sc}}, cfg, 1);
    const auto fa = shared_attention(scene.target, text, scene.reference,
                                     {FrequencyAwareSharing{{sc, sc, 2.0}, std::nullopt}}, cfg, 1);
    worst_eq = std::max(worst_eq, max_abs_diff(plain.attention.data(), fa.attention.data()));
  }
  o.check(worst_eq <= 1e-12, "constant schedule vs plain err " + num(worst_eq));
  if (o.pass) o.detail = "endpoints bitwise, n=5 err " + num(worst) + ", plain equivalence err " + num(worst_eq);
  return o;
}

Outcome ramp_exactness() {
  Outcome o;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  double worst = 0;
  for (int i = 0; i < 500; ++i) {
    const TimestepRamp r{u(gen), u(gen), u(gen), u(gen), 2 + gen() % 60};
    const auto first = ramp_at(r, 0);
    const auto last = ramp_at(r, r.total_steps - 1);
    if (first.s_hf != r.s_hf_start || first.s_lf != r.s_lf_start || last.s_hf != r.s_hf_end ||
        last.s_lf != r.s_lf_end) {
      o.check(false, "endpoint not exact");
    }
    for (std::size_t t = 0; t < r.total_steps; ++t) {
      const long double f = static_cast<long double>(t) / (r.total_steps - 1);
      const auto v = ramp_at(r, t);
      worst = std::max(worst, static_cast<double>(std::abs(v.s_hf - (r.s_hf_start + (r.s_hf_end - r.s_hf_start) * f))));
      worst = std::max(worst, static_cast<double>(std::abs(v.s_lf - (r.s_lf_start + (r.s_lf_end - r.s_lf_start) * f))));
    }
  }
  const double mid = ramp_at({0.2, 0.6, 1.0, 1.3, 5}, 2).s_hf;
  o.check(std::abs(mid - 0.4) <= 1e-12, "T=5 midpoint " + num(mid));
  o.check(worst <= 1e-12, "linear err " + num(worst));
  if (o.pass) o.detail = "endpoints exact, max linear err " + num(worst);
  return o;
}

ExperimentConfig load(const std::string& name) { return parse_experiment(read_file(kFixtures + "/" + name)); }

void compare_frozen(Outcome& o, const std::string& tag, const AlignmentMetrics& m, const Frozen& f) {
  const std::pair<double, double> pairs[] = {{m.argmax_positional_rate, f.argmax_positional_rate},
                                              {m.argmax_semantic_rate, f.argmax_semantic_rate},
                                              {m.positional_mass, f.positional_mass},
                                              {m.semantic_mass, f.semantic_mass}};
  for (const auto& [got, want] : pairs) {
    if (std::abs(got - want) > 1e-9) o.check(false, tag + " drifted from fixture: " + num(got) + " vs " + num(want));
  }
}

Outcome copying_mitigation() {
  Outcome o;
  const auto plain_cfg = load("copying_shuffle.json");
  const auto fa_cfg = load("copying_shuffle_freq_aware.json");
  const auto plain = run_experiment(plain_cfg)[0].alignment;
  const auto fa = run_experiment(fa_cfg)[0].alignment;
  compare_frozen(o, "plain", plain, kPlain);
  compare_frozen(o, "frequency_aware", fa, kFreqAware);

  // Independent recomputation of the same scene by the long-double oracle.
  const auto scene = build_scene(plain_cfg).scene;
  const auto op = oracle::shared_scene_metrics(scene, std::vector<long double>(64, 1.0L), plain_cfg.rotary);
  const auto of = oracle::shared_scene_metrics(scene, oracle::frequency_aware_scales(fa_cfg.rotary, 0.3, 1.2, 2.0),
                                               fa_cfg.rotary);
  compare_frozen(o, "oracle plain", plain,
                 {static_cast<double>(op.argmax_positional_rate), static_cast<double>(op.argmax_semantic_rate),
                  static_cast<double>(op.positional_mass), static_cast<double>(op.semantic_mass)});
  compare_frozen(o, "oracle frequency_aware", fa,
                 {static_cast<double>(of.argmax_positional_rate), static_cast<double>(of.argmax_semantic_rate),
                  static_cast<double>(of.positional_mass), static_cast<double>(of.semantic_mass)});

  o.check(plain.argmax_positional_rate > fa.argmax_positional_rate, "positional rate not reduced");
  o.check(fa.argmax_semantic_rate > plain.argmax_semantic_rate, "semantic rate not increased");
  if (o.pass) {
    o.detail = "argmax positional " + num(plain.argmax_positional_rate) + " -> " + num(fa.argmax_positional_rate) +
               ", argmax semantic " + num(plain.argmax_semantic_rate) + " -> " + num(fa.argmax_semantic_rate) +
               " (plain -> frequency_aware)";
  }
  return o;
}

Outcome band_attribution_check() {
  Outcome o;
  const auto cfg = load("copying_shuffle.json");
  const auto entry = run_experiment(cfg)[0];
  const Matrix total = entry.report.total_logits();
  const auto attr = band_attribution(entry.report, make_spectral_partition(cfg.rotary, 3));
  double worst = 0;
  for (std::size_t q = 0; q < total.rows(); ++q) {
    for (std::size_t k = 0; k < total.cols(); ++k) {
      double sum = 0;
      for (const Matrix& m : attr.logits) sum += m(q, k);
      worst = std::max(worst, std::abs(sum - total(q, k)));
    }
  }
  o.check(worst <= 1e-8, "band sum err " + num(worst));

  const auto masked = run_experiment(load("copying_shuffle_high_masked.json"))[0].alignment;
  o.check(masked.positional_mass < entry.alignment.positional_mass, "masking the high band did not reduce positional mass");
  o.check(std::abs(masked.positional_mass - kHighMaskedPositionalMass) <= 1e-9,
          "masked positional mass drifted: " + num(masked.positional_mass));
  if (o.pass) {
    o.detail = "band sum err " + num(worst) + ", positional_mass " + num(entry.alignment.positional_mass) + " -> " +
               num(masked.positional_mass) + " with high bands zeroed";
  }
  return o;
}

Outcome shifted_sanity() {
  Outcome o;
  const auto cfg = load("shifted.json");
  const auto entry = run_experiment(cfg)[0];
  o.check(entry.alignment.positional_mass == 0.0, "positional mass " + num(entry.alignment.positional_mass));
  double worst = 0;
  for (std::size_t q = 0; q < entry.report.n_queries(); ++q) {
    double row = 0;
    for (double v : entry.report.attention.row(q)) row += v;
    worst = std::max(worst, std::abs(row - 1.0));
  }
  o.check(worst <= 1e-9, "row sum err " + num(worst));
  for (const TokenInfo& k : entry.report.key_layout) {
    if (k.source != TokenSource::reference_image) continue;
    for (const TokenInfo& q : entry.report.query_layout) {
      if (k.position == q.position) o.check(false, "reference key collides with a target position");
    }
  }
  if (o.pass) o.detail = "positional_mass 0 exactly, max row-sum err " + num(worst);
  return o;
}

Outcome determinism(const fs::path& work) {
  Outcome o;
  const std::string args = "shared-attn '" + kFixtures + "/copying_shuffle.json'";
  const int a = run_cli(args, work / "run_a.json");
  const int b = run_cli(args, work / "run_b.json");
  o.check(a == 0 && b == 0, "exit codes " + std::to_string(a) + ", " + std::to_string(b));
  const auto ra = slurp(work / "run_a.json");
  o.check(!ra.empty() && ra == slurp(work / "run_b.json"), "reports differ");
  if (o.pass) o.detail = std::to_string(ra.size()) + " bytes, identical";
  return o;
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_scratch";
  fs::create_directories(work);

  struct Criterion {
    int id;
    std::string name;
    double limit_s;  // 0 = no runtime limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "RoPE identity suite", 1.0, rope_identities},
      {2, "polar decomposition", 0.0, polar_decomposition},
      {3, "decay curve vs oracle", 1.0, [&] { return decay_curve_cli(work); }},
      {4, "schedule exactness", 0.0, schedule_exactness},
      {5, "ramp exactness", 0.0, ramp_exactness},
      {6, "copying mitigation", 10.0, copying_mitigation},
      {7, "band attribution", 0.0, band_attribution_check},
      {8, "shifted-mode sanity", 0.0, shifted_sanity},
      {9, "determinism", 0.0, [&] { return determinism(work); }},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) o.check(false, "runtime " + num(secs) + " s over limit");
    failures += !o.pass;
    std::printf("%s  %d. %-24s %7.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
