#pragma once

// Attention diagnostics for shared-attention reports against planted scenes.

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <vector>

#include "ropefreq/attention.hpp"
#include "ropefreq/bands.hpp"
#include "ropefreq/errors.hpp"
#include "ropefreq/synthetic.hpp"

namespace ropefreq {

/// Averages over target-image queries.
///  positional_mass: mass on reference keys at the query's own position.
///  semantic_mass:   mass on the planted corresponding reference key.
///  argmax_*_rate:   fraction of queries whose highest-attention reference key
///                   is positionally aligned / the planted correspondent.
///  reference_mass + target_mass + text_mass = 1 per query.
struct AlignmentMetrics {
  double positional_mass = 0.0;
  double semantic_mass = 0.0;
  double argmax_positional_rate = 0.0;
  double argmax_semantic_rate = 0.0;
  double reference_mass = 0.0;
  double target_mass = 0.0;
  double text_mass = 0.0;
  std::size_t n_queries = 0;
};

/// Positions match when max(|dx|, |dy|) <= radius; radius 0 is exact equality.
inline bool aligned(Position2D a, Position2D b, std::int64_t radius) {
  return std::llabs(a.x - b.x) <= radius && std::llabs(a.y - b.y) <= radius;
}

inline AlignmentMetrics compute_alignment(const AttentionReport& report, const PlantedScene& scene,
                                          std::int64_t radius = 0) {
  if (report.query_layout.size() != report.n_queries() || report.key_layout.size() != report.n_keys()) {
    throw ShapeError("compute_alignment: report layout does not match attention shape");
  }
  const std::size_t n_scene = scene.correspondence.size();
  std::vector<std::size_t> ref_key_of(n_scene, report.n_keys());
  std::size_t n_ref = 0;
  for (std::size_t k = 0; k < report.key_layout.size(); ++k) {
    const TokenInfo& info = report.key_layout[k];
    if (info.source != TokenSource::reference_image) continue;
    if (info.index >= n_scene) throw ShapeError("compute_alignment: reference key index outside scene");
    ref_key_of[info.index] = k;
    ++n_ref;
  }
  if (n_ref != 0 && n_ref != n_scene) {
    throw ShapeError("compute_alignment: reference keys do not cover the scene grid");
  }

  AlignmentMetrics m;
  for (std::size_t q = 0; q < report.query_layout.size(); ++q) {
    const TokenInfo& qi = report.query_layout[q];
    if (qi.source != TokenSource::target_image) continue;
    if (qi.index >= n_scene) throw ShapeError("compute_alignment: query index outside scene");
    ++m.n_queries;
    const auto row = report.attention.row(q);
    std::size_t best = report.n_keys();
    double best_value = -1.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const TokenInfo& ki = report.key_layout[k];
      switch (ki.source) {
        case TokenSource::target_image: m.target_mass += row[k]; break;
        case TokenSource::target_text: m.text_mass += row[k]; break;
        case TokenSource::reference_image:
          m.reference_mass += row[k];
          if (aligned(ki.position, qi.position, radius)) m.positional_mass += row[k];
          if (row[k] > best_value) {
            best_value = row[k];
            best = k;
          }
          break;
      }
    }
    if (n_ref == 0) continue;
    const std::size_t semantic_key = ref_key_of[scene.correspondence[qi.index]];
    m.semantic_mass += row[semantic_key];
    if (aligned(report.key_layout[best].position, qi.position, radius)) m.argmax_positional_rate += 1.0;
    if (best == semantic_key) m.argmax_semantic_rate += 1.0;
  }
  if (m.n_queries == 0) throw ShapeError("compute_alignment: report has no target image queries");
  const double n = static_cast<double>(m.n_queries);
  for (double* f : {&m.positional_mass, &m.semantic_mass, &m.argmax_positional_rate, &m.argmax_semantic_rate,
                    &m.reference_mass, &m.target_mass, &m.text_mass}) {
    *f /= n;
  }
  return m;
}

/// Logit contribution of each band. Chunks outside the partition are pooled
/// into a trailing "rest" entry, so the matrices always sum to total_logits().
struct BandAttribution {
  std::vector<std::string> labels;
  std::vector<Matrix> logits;          // per band, n_queries x n_keys
  std::vector<double> mean_abs;        // over (target-image query, reference key) pairs
};

inline BandAttribution band_attribution(const AttentionReport& report, const BandPartition& partition) {
  if (!report.chunk_logits) throw UnsupportedReport("band_attribution: report carries no per-chunk logits");
  const std::size_t nq = report.n_queries();
  const std::size_t nk = report.n_keys();
  std::vector<int> band_of(report.n_chunks, -1);
  for (std::size_t b = 0; b < partition.size(); ++b) {
    const ChunkRange r = partition.bands()[b].range;
    if (r.end > report.n_chunks) throw ConfigError("band_attribution: band exceeds chunk count");
    for (std::size_t d = r.begin; d < r.end; ++d) band_of[d] = static_cast<int>(b);
  }
  bool has_rest = false;
  for (int b : band_of) has_rest |= b < 0;

  BandAttribution out;
  for (const Band& b : partition.bands()) out.labels.push_back(b.label);
  if (has_rest) out.labels.push_back("rest");
  const std::size_t n_out = out.labels.size();
  out.logits.assign(n_out, Matrix(nq, nk));
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t d = 0; d < report.n_chunks; ++d) {
        const std::size_t b = band_of[d] < 0 ? n_out - 1 : static_cast<std::size_t>(band_of[d]);
        out.logits[b](q, k) += report.chunk_logit(q, k, d);
      }
    }
  }

  // Prefer (image query, reference key) pairs; fall back to every pair when
  // the report has no reference keys.
  bool any_ref = false;
  for (const TokenInfo& k : report.key_layout) any_ref |= k.source == TokenSource::reference_image;
  out.mean_abs.assign(n_out, 0.0);
  std::size_t pairs = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (!report.query_layout.empty() && report.query_layout[q].source != TokenSource::target_image) continue;
    for (std::size_t k = 0; k < nk; ++k) {
      if (any_ref && report.key_layout[k].source != TokenSource::reference_image) continue;
      ++pairs;
      for (std::size_t b = 0; b < n_out; ++b) out.mean_abs[b] += std::abs(out.logits[b](q, k));
    }
  }
  if (pairs > 0) {
    for (double& v : out.mean_abs) v /= static_cast<double>(pairs);
  }
  return out;
}

/// Element-wise mean of attention matrices from several evaluations (e.g.
/// several timesteps). Only attention and output are averaged; layouts are
/// taken from the first report and must match.
inline AttentionReport average_reports(const std::vector<AttentionReport>& reports) {
  if (reports.empty()) throw ConfigError("average_reports: no reports");
  AttentionReport out = reports.front();
  out.chunk_logits.reset();
  out.head_logits.clear();
  out.head_attention.clear();
  const double n = static_cast<double>(reports.size());
  out.attention = Matrix(out.attention.rows(), out.attention.cols());
  out.output = Matrix(out.output.rows(), out.output.cols());
  for (const AttentionReport& r : reports) {
    if (r.key_layout != out.key_layout || r.query_layout != out.query_layout) {
      throw ShapeError("average_reports: layouts differ");
    }
    for (std::size_t q = 0; q < out.attention.rows(); ++q) {
      for (std::size_t k = 0; k < out.attention.cols(); ++k) out.attention(q, k) += r.attention(q, k) / n;
      for (std::size_t c = 0; c < out.output.cols(); ++c) out.output(q, c) += r.output(q, c) / n;
    }
  }
  return out;
}

}  // namespace ropefreq
