#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "ropefreq/diagnostics.hpp"
#include "ropefreq/sharing.hpp"

using namespace ropefreq;

namespace {

PlantedScene scene_of(PermutationKind kind, double noise = 0.1, std::size_t w = 4, std::size_t dim = 32) {
  return plant_scene(make_grid(w, w, dim, 13, 0.8), kind, noise, 4);
}

AttentionReport run(const PlantedScene& s, const SharingParams& p, std::size_t text = 0, std::size_t heads = 1) {
  const auto cfg = RotaryConfig::default_2d(s.target.dim());
  return shared_attention(s.target, make_text_tokens(text, s.target.dim(), 99), s.reference, p, cfg, heads);
}

void expect_unit_interval(const AlignmentMetrics& m) {
  for (double v : {m.positional_mass, m.semantic_mass, m.argmax_positional_rate, m.argmax_semantic_rate,
                   m.reference_mass, m.target_mass, m.text_mass}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace

TEST(Alignment, IdentitySceneHasEqualPositionalAndSemanticMass) {
  const auto s = scene_of(PermutationKind::identity());
  const auto m = compute_alignment(run(s, {PlainSharing{1.0}}), s);
  EXPECT_EQ(m.positional_mass, m.semantic_mass);
  EXPECT_EQ(m.argmax_positional_rate, m.argmax_semantic_rate);
  EXPECT_EQ(m.n_queries, 16u);
  expect_unit_interval(m);
}

TEST(Alignment, NoSharingGivesZeroReferenceMetrics) {
  const auto s = scene_of(PermutationKind::shuffle());
  const auto m = compute_alignment(run(s, {NoSharing{}}, 3), s);
  EXPECT_EQ(m.positional_mass, 0.0);
  EXPECT_EQ(m.semantic_mass, 0.0);
  EXPECT_EQ(m.argmax_positional_rate, 0.0);
  EXPECT_EQ(m.argmax_semantic_rate, 0.0);
  EXPECT_EQ(m.reference_mass, 0.0);
  EXPECT_NEAR(m.target_mass + m.text_mass, 1.0, 1e-12);
}

TEST(Alignment, MassesPartitionUnity) {
  const auto s = scene_of(PermutationKind::shuffle());
  for (const SharingParams& p : {SharingParams{PlainSharing{1.0}},
                                 SharingParams{FrequencyAwareSharing{{0.3, 1.2, 2.0}, std::nullopt}},
                                 SharingParams{ShiftedSharing{{4, 0}, 1.0}}}) {
    const auto m = compute_alignment(run(s, p, 2, 2), s);
    EXPECT_NEAR(m.reference_mass + m.target_mass + m.text_mass, 1.0, 1e-12);
    EXPECT_LE(m.positional_mass, m.reference_mass + 1e-15);
    EXPECT_LE(m.semantic_mass, m.reference_mass + 1e-15);
    expect_unit_interval(m);
  }
}

TEST(Alignment, MatchesBruteForceOracle) {
  const auto s = scene_of(PermutationKind::shuffle(), 0.1, 4, 16);
  const auto cfg = RotaryConfig::default_2d(16);
  const SharingParams p{FrequencyAwareSharing{{0.3, 1.2, 2.0}, std::nullopt}};
  const auto m = compute_alignment(run(s, p), s);
  const auto o = oracle::shared_scene_metrics(s, oracle::frequency_aware_scales(cfg, 0.3, 1.2, 2.0), cfg);
  EXPECT_NEAR(m.positional_mass, static_cast<double>(o.positional_mass), 1e-9);
  EXPECT_NEAR(m.semantic_mass, static_cast<double>(o.semantic_mass), 1e-9);
  EXPECT_NEAR(m.reference_mass, static_cast<double>(o.reference_mass), 1e-9);
  EXPECT_EQ(m.argmax_positional_rate, static_cast<double>(o.argmax_positional_rate));
  EXPECT_EQ(m.argmax_semantic_rate, static_cast<double>(o.argmax_semantic_rate));
}

TEST(Alignment, ShiftedByGridWidthHasNoPositionalMass) {
  const auto s = scene_of(PermutationKind::identity(), 0.0);
  const auto m = compute_alignment(run(s, {ShiftedSharing{{4, 0}, 1.0}}), s);
  EXPECT_EQ(m.positional_mass, 0.0);
  EXPECT_EQ(m.argmax_positional_rate, 0.0);
  EXPECT_GT(m.semantic_mass, 0.0);
}

TEST(Alignment, RadiusVariant) {
  EXPECT_TRUE(aligned({1, 1}, {1, 1}, 0));
  EXPECT_FALSE(aligned({1, 1}, {2, 1}, 0));
  EXPECT_TRUE(aligned({1, 1}, {2, 2}, 1));
  EXPECT_FALSE(aligned({1, 1}, {3, 2}, 1));
  const auto s = scene_of(PermutationKind::shuffle());
  const auto rep = run(s, {PlainSharing{1.0}});
  const auto m0 = compute_alignment(rep, s, 0);
  const auto m1 = compute_alignment(rep, s, 1);
  const auto big = compute_alignment(rep, s, 100);
  EXPECT_GE(m1.positional_mass, m0.positional_mass);
  EXPECT_NEAR(big.positional_mass, big.reference_mass, 1e-12);
  EXPECT_EQ(big.argmax_positional_rate, 1.0);
}

TEST(Alignment, Errors) {
  const auto s = scene_of(PermutationKind::shuffle());
  auto rep = run(s, {PlainSharing{1.0}});
  rep.key_layout.pop_back();
  EXPECT_THROW(compute_alignment(rep, s), ShapeError);
  const auto small = scene_of(PermutationKind::shuffle(), 0.1, 3);
  EXPECT_THROW(compute_alignment(run(s, {PlainSharing{1.0}}), small), ShapeError);
}

TEST(Alignment, PlainScaleMonotoneWhenReferenceLogitsPositive) {
  // All energy in the lowest-frequency chunk of each axis: rotations over a
  // 3x3 grid stay far below pi/2, so every reference logit is positive.
  const auto cfg = RotaryConfig::default_2d(16);
  Matrix f(9, 16);
  Rng rng(5);
  for (std::size_t i = 0; i < 9; ++i) {
    f(i, 6) = 1.0 + 0.1 * rng.uniform();
    f(i, 7) = 0.1 * rng.uniform();
    f(i, 14) = 1.0 + 0.1 * rng.uniform();
    f(i, 15) = 0.1 * rng.uniform();
  }
  const auto s = plant_scene(TokenSet::image_grid(f, {3, 3}), PermutationKind::shuffle(), 0.0, 3);
  const auto text = make_text_tokens(0, 16, 1);
  const auto base = shared_attention(s.target, text, s.reference, {PlainSharing{1.0}}, cfg, 1);
  const Matrix logits = base.total_logits();
  for (std::size_t q = 0; q < 9; ++q) {
    for (std::size_t k = 9; k < 18; ++k) ASSERT_GT(logits(q, k), 0.0);
  }
  double prev = -1.0;
  for (double scale : {0.25, 0.5, 1.0, 1.5, 2.0, 4.0}) {
    const auto m = compute_alignment(shared_attention(s.target, text, s.reference, {PlainSharing{scale}}, cfg, 1), s);
    EXPECT_GT(m.reference_mass, prev);
    prev = m.reference_mass;
  }
}

TEST(BandAttribution, SumsToFullLogits) {
  const auto s = scene_of(PermutationKind::shuffle());
  const auto cfg = RotaryConfig::default_2d(32);
  const auto rep = run(s, {FrequencyAwareSharing{{0.3, 1.2, 2.0}, std::nullopt}}, 2, 2);
  const Matrix total = rep.total_logits();
  for (const auto& part : {make_spectral_partition(cfg, 3), make_even_partition(cfg, 3, Axis::x)}) {
    const auto a = band_attribution(rep, part);
    EXPECT_EQ(a.labels.size(), a.logits.size());
    for (std::size_t q = 0; q < total.rows(); ++q) {
      for (std::size_t k = 0; k < total.cols(); ++k) {
        double sum = 0;
        for (const auto& m : a.logits) sum += m(q, k);
        EXPECT_NEAR(sum, total(q, k), 1e-8);
      }
    }
  }
  const auto x_only = band_attribution(rep, make_even_partition(cfg, 3, Axis::x));
  EXPECT_EQ(x_only.labels.back(), "rest");
}

TEST(BandAttribution, SingleBandEqualsFullLogits) {
  const auto s = scene_of(PermutationKind::shuffle());
  const auto rep = run(s, {PlainSharing{1.0}});
  const auto a = band_attribution(rep, BandPartition({{"all", {0, 16}}}));
  ASSERT_EQ(a.logits.size(), 1u);
  const Matrix total = rep.total_logits();
  for (std::size_t i = 0; i < total.data().size(); ++i) EXPECT_NEAR(a.logits[0].data()[i], total.data()[i], 1e-8);
}

TEST(BandAttribution, ZeroedBandContributesNothingOnReferenceKeys) {
  const auto s = scene_of(PermutationKind::shuffle());
  SharingParams p{PlainSharing{1.0}};
  p.band_mask_override = BandMaskOverride{{{0, 3}, {8, 11}}, BandMaskMode::zero()};
  const auto rep = run(s, p);
  const auto a = band_attribution(rep, BandPartition({{"x/high", {0, 3}}, {"y/high", {8, 11}}}));
  EXPECT_EQ(a.mean_abs[0], 0.0);
  EXPECT_EQ(a.mean_abs[1], 0.0);
  EXPECT_GT(a.mean_abs[2], 0.0);
  for (std::size_t q = 0; q < 16; ++q) {
    for (std::size_t k = 16; k < 32; ++k) EXPECT_EQ(a.logits[0](q, k), 0.0);
  }
}

TEST(BandAttribution, RequiresChunkLogits) {
  const auto s = scene_of(PermutationKind::shuffle());
  auto rep = run(s, {PlainSharing{1.0}});
  rep.chunk_logits.reset();
  EXPECT_THROW(band_attribution(rep, BandPartition({{"all", {0, 16}}})), UnsupportedReport);
}

TEST(AverageReports, MeanOfAttention) {
  const auto s = scene_of(PermutationKind::shuffle());
  const SharingParams p{FrequencyAwareSharing{{0.3, 1.2, 2.0}, TimestepRamp{}}};
  const auto cfg = RotaryConfig::default_2d(32);
  const auto text = make_text_tokens(0, 32, 1);
  const auto a = shared_attention(s.target, text, s.reference, p, cfg, 1, 0);
  const auto b = shared_attention(s.target, text, s.reference, p, cfg, 1, 27);
  const auto avg = average_reports({a, b});
  for (std::size_t i = 0; i < avg.attention.data().size(); ++i) {
    EXPECT_NEAR(avg.attention.data()[i], 0.5 * (a.attention.data()[i] + b.attention.data()[i]), 1e-15);
  }
  EXPECT_FALSE(avg.chunk_logits.has_value());
  EXPECT_THROW(average_reports({}), ConfigError);
}
