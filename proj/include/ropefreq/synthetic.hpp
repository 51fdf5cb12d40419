#pragma once

// Seeded synthetic token grids and planted reference scenes.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ropefreq/attention.hpp"
#include "ropefreq/errors.hpp"
#include "ropefreq/matrix.hpp"

namespace ropefreq {

// mt19937_64 output is fixed by the standard; the distributions on top of it
// are not, so uniform/normal/index draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = 0;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

inline void normalize_inplace(std::span<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw ConfigError("normalize: zero vector");
  for (double& x : v) x /= n;
}

/// Unit-norm feature rows on a width x height grid, positions row-major.
///
/// With shared_component = g > 0 every row is normalize(sqrt(1-g) r_i + sqrt(g) c)
/// for one common random direction c, so all tokens share a content-free
/// component the way real query/key features do. g = 0 gives isotropic rows.
inline TokenSet make_grid(std::size_t width, std::size_t height, std::size_t dim, std::uint64_t seed,
                          double shared_component = 0.0) {
  if (width == 0 || height == 0 || dim == 0) throw ConfigError("make_grid: zero-size grid");
  if (!(shared_component >= 0.0 && shared_component < 1.0)) {
    throw ConfigError("make_grid: shared_component must lie in [0, 1)");
  }
  Rng rng(seed);
  std::vector<double> common(dim);
  for (double& x : common) x = rng.normal();
  normalize_inplace(common);

  const GridShape grid{width, height};
  Matrix features(grid.size(), dim);
  const double a = std::sqrt(1.0 - shared_component);
  const double b = std::sqrt(shared_component);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto row = features.row(i);
    for (double& x : row) x = rng.normal();
    normalize_inplace(row);
    if (shared_component > 0.0) {
      for (std::size_t c = 0; c < dim; ++c) row[c] = a * row[c] + b * common[c];
      normalize_inplace(row);
    }
  }
  return TokenSet::image_grid(std::move(features), grid);
}

/// Unit-norm text features, all at position (0,0).
inline TokenSet make_text_tokens(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix features(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    auto row = features.row(i);
    for (double& x : row) x = rng.normal();
    normalize_inplace(row);
  }
  return TokenSet::text(std::move(features));
}

struct PermutationKind {
  enum class Kind { identity, shuffle, shift_by };
  Kind kind = Kind::identity;
  std::int64_t k = 0;

  static PermutationKind identity() { return {Kind::identity, 0}; }
  static PermutationKind shuffle() { return {Kind::shuffle, 0}; }
  static PermutationKind shift_by(std::int64_t k) { return {Kind::shift_by, k}; }
  friend bool operator==(PermutationKind, PermutationKind) = default;
};

/// target token i semantically matches reference token correspondence[i].
struct PlantedScene {
  TokenSet target;
  TokenSet reference;
  std::vector<std::size_t> correspondence;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
};

inline std::vector<std::size_t> make_correspondence(std::size_t n, PermutationKind kind, Rng& rng) {
  std::vector<std::size_t> corr(n);
  for (std::size_t i = 0; i < n; ++i) corr[i] = i;
  switch (kind.kind) {
    case PermutationKind::Kind::identity: break;
    case PermutationKind::Kind::shift_by: {
      const auto sn = static_cast<std::int64_t>(n);
      if (kind.k <= -sn || kind.k >= sn) {
        throw ConfigError("shift_by: k=" + std::to_string(kind.k) + " must satisfy |k| < " + std::to_string(n));
      }
      const std::int64_t k = (kind.k + sn) % sn;
      for (std::size_t i = 0; i < n; ++i) corr[i] = static_cast<std::size_t>((static_cast<std::int64_t>(i) + k) % sn);
      break;
    }
    case PermutationKind::Kind::shuffle:
      for (std::size_t i = n; i > 1; --i) std::swap(corr[i - 1], corr[rng.below(i)]);
      break;
  }
  return corr;
}

/// Reference grid whose token correspondence[i] is target token i plus
/// isotropic Gaussian noise (per-coordinate std noise_level/sqrt(dim)),
/// renormalized. Zero noise copies the target rows bit for bit.
inline PlantedScene plant_scene(const TokenSet& base, PermutationKind kind, double noise_level, std::uint64_t seed) {
  if (!base.grid) throw ConfigError("plant_scene: base must be an image grid");
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) throw ConfigError("plant_scene: noise_level must be >= 0");
  const std::size_t n = base.size();
  const std::size_t dim = base.dim();
  Rng rng(seed);
  PlantedScene scene;
  scene.correspondence = make_correspondence(n, kind, rng);
  scene.noise_level = noise_level;
  scene.seed = seed;
  scene.target = base;

  Matrix ref(n, dim);
  const double sigma = noise_level / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ref.row(scene.correspondence[i]);
    const auto src = base.features.row(i);
    std::copy(src.begin(), src.end(), row.begin());
    if (noise_level > 0.0) {
      for (double& x : row) x += sigma * rng.normal();
      normalize_inplace(row);
    }
  }
  scene.reference = TokenSet::image_grid(std::move(ref), *base.grid);
  return scene;
}

inline std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv.at(perm[i]) = i;
  return inv;
}

}  // namespace ropefreq
