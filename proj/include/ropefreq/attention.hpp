#pragma once

// Toy scaled-dot-product attention with RoPE over token sets, without learned
// projections: queries, keys and values are caller-supplied features.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ropefreq/errors.hpp"
#include "ropefreq/matrix.hpp"
#include "ropefreq/rope.hpp"

namespace ropefreq {

enum class Modality { image, text };

struct GridShape {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t size() const { return width * height; }
  friend bool operator==(GridShape, GridShape) = default;
};

/// Row-major grid coordinate of token `index`.
inline Position2D grid_position(GridShape grid, std::size_t index) {
  return {static_cast<std::int64_t>(index % grid.width), static_cast<std::int64_t>(index / grid.width)};
}

/// Feature rows with grid positions and a modality tag.
///  - text tokens all sit at (0,0);
///  - image tokens with a grid shape enumerate the grid row-major.
struct TokenSet {
  Matrix features;
  std::vector<Position2D> positions;
  Modality modality = Modality::image;
  std::optional<GridShape> grid;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  static TokenSet image_grid(Matrix features, GridShape grid) {
    TokenSet t;
    t.positions.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) t.positions.push_back(grid_position(grid, i));
    t.features = std::move(features);
    t.modality = Modality::image;
    t.grid = grid;
    t.validate();
    return t;
  }

  static TokenSet image(Matrix features, std::vector<Position2D> positions) {
    TokenSet t{std::move(features), std::move(positions), Modality::image, std::nullopt};
    t.validate();
    return t;
  }

  static TokenSet text(Matrix features) {
    TokenSet t;
    t.positions.assign(features.rows(), Position2D{});
    t.features = std::move(features);
    t.modality = Modality::text;
    t.validate();
    return t;
  }

  void validate() const {
    if (positions.size() != features.rows()) {
      throw ShapeError("TokenSet: " + std::to_string(positions.size()) + " positions for " +
                       std::to_string(features.rows()) + " feature rows");
    }
    for (double v : features.data()) {
      if (!std::isfinite(v)) throw ConfigError("TokenSet: non-finite feature value");
    }
    if (modality == Modality::text) {
      for (Position2D p : positions) {
        if (!(p == Position2D{})) throw ConfigError("TokenSet: text tokens must sit at position (0,0)");
      }
    }
    if (grid) {
      if (modality != Modality::image) throw ConfigError("TokenSet: only image tokens carry a grid");
      if (grid->size() != features.rows()) throw ShapeError("TokenSet: grid size does not match token count");
      for (std::size_t i = 0; i < positions.size(); ++i) {
        if (!(positions[i] == grid_position(*grid, i))) {
          throw ConfigError("TokenSet: positions must enumerate the grid row-major");
        }
      }
    }
  }
};

namespace detail {
struct ChannelStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Unbiased (n-1) standard deviation; a single row has zero spread.
inline ChannelStats channel_stats(const Matrix& m, std::size_t c) {
  const std::size_t n = m.rows();
  double mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) mean += m(r, c);
  mean /= static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (std::size_t r = 0; r < n; ++r) ss += (m(r, c) - mean) * (m(r, c) - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}
}  // namespace detail

inline constexpr double kAdainDegenerateStd = 1e-8;

/// Per-channel AdaIN: renormalizes each column of `x` to the mean and
/// (unbiased) standard deviation of the matching column of `y`. Columns of `x`
/// with std below 1e-8 become the constant mean(y).
inline Matrix adain(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("adain: width mismatch " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()));
  }
  if (y.rows() < 2) throw ShapeError("adain: style features need at least 2 rows");
  if (x.rows() == 0) return x;
  Matrix out(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto sx = detail::channel_stats(x, c);
    const auto sy = detail::channel_stats(y, c);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      out(r, c) = sx.stddev < kAdainDegenerateStd ? sy.mean
                                                  : (x(r, c) - sx.mean) / sx.stddev * sy.stddev + sy.mean;
    }
  }
  return out;
}

enum class TokenSource { target_image, target_text, reference_image };

inline const char* to_string(TokenSource s) {
  switch (s) {
    case TokenSource::target_image: return "target_image";
    case TokenSource::target_text: return "target_text";
    case TokenSource::reference_image: return "reference_image";
  }
  return "?";
}

/// Provenance of one query or key row.
struct TokenInfo {
  TokenSource source = TokenSource::target_image;
  std::size_t index = 0;  // row within its source token set
  Position2D position;    // position used for RoPE
  friend bool operator==(const TokenInfo&, const TokenInfo&) = default;
};

struct AttentionReport {
  std::size_t heads = 1;
  std::size_t head_dim = 0;
  Matrix attention;                   // mean of head_attention; rows sum to 1
  std::vector<Matrix> head_attention;
  std::vector<Matrix> head_logits;    // scaled by 1/sqrt(head_dim), before max-subtraction
  Matrix output;
  std::vector<TokenInfo> query_layout;
  std::vector<TokenInfo> key_layout;

  // chunk_logits[(q * n_keys + k) * n_chunks + d]: chunk d's additive share of
  // the logit of its head. Summed over a head's chunks it gives head_logits.
  std::optional<std::vector<double>> chunk_logits;
  std::size_t n_chunks = 0;

  std::vector<std::string> notes;

  std::size_t n_queries() const { return attention.rows(); }
  std::size_t n_keys() const { return attention.cols(); }

  double chunk_logit(std::size_t q, std::size_t k, std::size_t d) const {
    if (!chunk_logits) throw UnsupportedReport("report carries no per-chunk logits");
    return (*chunk_logits)[(q * n_keys() + k) * n_chunks + d];
  }

  /// Sum of head logits; equals the sum of all chunk contributions.
  Matrix total_logits() const {
    Matrix out(n_queries(), n_keys());
    for (const Matrix& l : head_logits) {
      for (std::size_t q = 0; q < out.rows(); ++q) {
        for (std::size_t k = 0; k < out.cols(); ++k) out(q, k) += l(q, k);
      }
    }
    return out;
  }
};

struct AttendOptions {
  bool keep_chunk_logits = true;
};

/// Softmax of one row with max-subtraction.
inline void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double m = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : row) v /= total;
}

/// Attention over queries and keys that already carry their rotations (and
/// any modulation). Head h owns chunks [h*C/H, (h+1)*C/H) and the matching
/// value columns.
inline AttentionReport attend_rotated(const Matrix& q_rot, const Matrix& k_rot, const Matrix& values,
                                      const RotaryConfig& config, std::size_t heads,
                                      AttendOptions options = {}) {
  const std::size_t dim = config.dim();
  if (q_rot.cols() != dim || k_rot.cols() != dim || values.cols() != dim) {
    throw ShapeError("attend: feature widths must all equal dim " + std::to_string(dim));
  }
  if (values.rows() != k_rot.rows()) throw ShapeError("attend: value rows must equal key rows");
  if (k_rot.rows() == 0) throw ShapeError("attend: no keys");
  if (heads == 0 || dim % (2 * heads) != 0) {
    throw ConfigError("attend: dim " + std::to_string(dim) + " is not divisible by 2*heads (heads=" +
                      std::to_string(heads) + ")");
  }
  const std::size_t nq = q_rot.rows();
  const std::size_t nk = k_rot.rows();
  const std::size_t n_chunks = config.n_chunks();
  const std::size_t chunks_per_head = n_chunks / heads;
  const std::size_t head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  AttentionReport report;
  report.heads = heads;
  report.head_dim = head_dim;
  report.n_chunks = n_chunks;
  report.attention = Matrix(nq, nk);
  report.output = Matrix(nq, dim);
  if (options.keep_chunk_logits) report.chunk_logits.emplace(nq * nk * n_chunks, 0.0);

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * chunks_per_head;
    const std::size_t c1 = c0 + chunks_per_head;
    Matrix logits(nq, nk);
    for (std::size_t q = 0; q < nq; ++q) {
      const auto qr = q_rot.row(q);
      for (std::size_t k = 0; k < nk; ++k) {
        const auto kr = k_rot.row(k);
        double acc = 0.0;
        for (std::size_t d = c0; d < c1; ++d) {
          const double term = (qr[2 * d] * kr[2 * d] + qr[2 * d + 1] * kr[2 * d + 1]) * scale;
          if (report.chunk_logits) (*report.chunk_logits)[(q * nk + k) * n_chunks + d] = term;
          acc += term;
        }
        logits(q, k) = acc;
      }
    }
    Matrix probs = logits;
    for (std::size_t q = 0; q < nq; ++q) softmax_inplace(probs.row(q));
    for (std::size_t q = 0; q < nq; ++q) {
      for (std::size_t k = 0; k < nk; ++k) {
        report.attention(q, k) += probs(q, k) / static_cast<double>(heads);
        const double p = probs(q, k);
        for (std::size_t c = 2 * c0; c < 2 * c1; ++c) report.output(q, c) += p * values(k, c);
      }
    }
    report.head_logits.push_back(std::move(logits));
    report.head_attention.push_back(std::move(probs));
  }
  if (heads == 1) report.attention = report.head_attention.front();
  return report;
}

namespace detail {
inline Matrix rotate_rows(const TokenSet& tokens, const RotaryConfig& config) {
  Matrix out = tokens.features;
  for (std::size_t r = 0; r < out.rows(); ++r) apply_rope_inplace(out.row(r), tokens.positions[r], config);
  return out;
}

inline std::vector<TokenInfo> layout_of(const TokenSet& tokens) {
  std::vector<TokenInfo> out;
  const auto source = tokens.modality == Modality::image ? TokenSource::target_image : TokenSource::target_text;
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({source, i, tokens.positions[i]});
  return out;
}
}  // namespace detail

/// RoPE at each token's position, then per-head softmax(QK^T / sqrt(dim/heads)) V.
inline AttentionReport attend(const TokenSet& queries, const TokenSet& keys, const Matrix& values,
                              const RotaryConfig& config, std::size_t heads, AttendOptions options = {}) {
  queries.validate();
  keys.validate();
  if (queries.dim() != config.dim() || keys.dim() != config.dim()) {
    throw ShapeError("attend: token width does not match rotary dim");
  }
  AttentionReport report = attend_rotated(detail::rotate_rows(queries, config), detail::rotate_rows(keys, config),
                                          values, config, heads, options);
  report.query_layout = detail::layout_of(queries);
  report.key_layout = detail::layout_of(keys);
  return report;
}

}  // namespace ropefreq
