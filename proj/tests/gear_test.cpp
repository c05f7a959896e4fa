#include <gtest/gtest.h>

#include <random>

#include "gearkv/attention.hpp"
#include "gearkv/error.hpp"
#include "gearkv/gear.hpp"

using namespace gearkv;

namespace {

GearConfig kivi2(double sparsity, std::size_t rank) {
  GearConfig cfg;
  cfg.bit_width = 2;
  cfg.sparsity_percent = sparsity;
  cfg.rank_prefill = rank;
  cfg.rank_decode = rank;
  cfg.buffer_size = 64;
  cfg.key_scheme = GroupingScheme::per_channel_grouped(64);
  cfg.value_scheme = GroupingScheme::per_token_grouped(64);
  return cfg;
}

SyntheticKVSpec outlier_family(std::uint64_t seed) {
  SyntheticKVSpec spec;
  spec.tokens = 256;
  spec.channels = 128;
  spec.heads = 2;
  spec.seed = seed;
  spec.outlier_channels = 4;
  spec.outlier_scale = 16;
  spec.token_correlation = 0.9;
  return spec;
}

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  DenseMatrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

double rel_error(const DenseMatrix& x, const CompressedBlock& block) {
  return frobenius_error(x, reconstruct_block(block)) / frobenius_norm(x);
}

}  // namespace

TEST(GearConfig, ValidationRules) {
  GearConfig cfg = kivi2(2, 4);
  EXPECT_NO_THROW(cfg.validate());
  cfg.buffer_size = 20;  // not a multiple of the per-channel group size
  EXPECT_THROW(cfg.validate(), Error);
  cfg.buffer_size = 128;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.flush_threshold(), 128u);

  GearConfig bad;
  bad.bit_width = 3;
  EXPECT_THROW(bad.validate(), Error);
  bad = GearConfig{};
  bad.sparsity_percent = 150;
  EXPECT_THROW(bad.validate(), Error);
  bad = GearConfig{};
  bad.coverage_percent = -1;
  EXPECT_THROW(bad.validate(), Error);
  bad = GearConfig{};
  bad.buffer_size = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(CompressBlock, BackboneOnlyMatchesPlainQuantization) {
  const auto x = random_matrix(64, 32, 1);
  GearConfig cfg;
  cfg.sparsity_percent = 0;
  const auto block = compress_block(x, cfg, {2, 16}, Role::kKey, 0);
  EXPECT_TRUE(block.outliers.empty());
  EXPECT_TRUE(block.lowrank.empty());
  const auto plain = dequantize(quantize(x, cfg.bit_width, cfg.key_scheme));
  EXPECT_EQ(reconstruct_block(block), plain);
  EXPECT_EQ(block.backbone_dense(), plain);
}

TEST(CompressBlock, GridInputIsExact) {
  // Every row holds the values 0..3, so per-token 2-bit groups are exact.
  DenseMatrix x(8, 4);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = static_cast<float>((r + c) % 4);
  GearConfig cfg;
  cfg.bit_width = 2;
  cfg.sparsity_percent = 0;
  const auto block = compress_block(x, cfg, {1, 4}, Role::kValue, 0);
  EXPECT_EQ(reconstruct_block(block), x);
}

TEST(CompressBlock, PassthroughKeepsRawRows) {
  const auto x = random_matrix(10, 8, 2);
  GearConfig cfg;
  cfg.bit_width = kPassthroughBits;
  cfg.sparsity_percent = 0;
  cfg.rank_prefill = 0;
  const auto block = compress_block(x, cfg, {2, 4}, Role::kKey, 0);
  EXPECT_TRUE(std::holds_alternative<DenseMatrix>(block.backbone));
  EXPECT_EQ(reconstruct_block(block), x);
}

TEST(CompressBlock, ReconstructionIsComponentSum) {
  const auto spec = outlier_family(3);
  const auto kv = generate_synthetic_kv(spec);
  for (Role role : {Role::kKey, Role::kValue}) {
    const auto& x = role == Role::kKey ? kv.keys : kv.values;
    const auto block = compress_block(x, kivi2(2, 4), spec.layout(), role, 4);
    ASSERT_FALSE(block.outliers.empty());
    ASSERT_FALSE(block.lowrank.empty());
    // Independent component materialization summed in double.
    const auto d = block.backbone_dense();
    const auto l = block.lowrank.reconstruct();
    const auto s = block.outliers.to_dense();
    const auto got = reconstruct_block(block);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double want = static_cast<double>(d(r, c)) + l(r, c) + s(r, c);
        EXPECT_NEAR(got(r, c), want, 1e-6 * std::max(1.0, std::abs(want)));
      }
  }
}

TEST(CompressBlock, GearBeatsBackboneOnOutlierKeys) {
  const auto spec = outlier_family(5);
  const auto kv = generate_synthetic_kv(spec);
  const auto backbone = compress_block(kv.keys, kivi2(0, 0), spec.layout(), Role::kKey, 0);
  const auto gear = compress_block(kv.keys, kivi2(2, 4), spec.layout(), Role::kKey, 4);
  EXPECT_LT(frobenius_error(kv.keys, reconstruct_block(gear)),
            frobenius_error(kv.keys, reconstruct_block(backbone)));
}

TEST(CompressBlock, CorrectionTermsNeverHurt) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto spec = outlier_family(seed);
    const auto kv = generate_synthetic_kv(spec);
    for (Role role : {Role::kKey, Role::kValue}) {
      const auto& x = role == Role::kKey ? kv.keys : kv.values;
      for (int bits : {2, 4}) {
        GearConfig base = kivi2(0, 0);
        base.bit_width = bits;
        GearConfig gear_l = base;
        GearConfig gear = base;
        gear.sparsity_percent = 2;
        const double eb = frobenius_error(x, reconstruct_block(compress_block(x, base, spec.layout(), role, 0)));
        const double el = frobenius_error(x, reconstruct_block(compress_block(x, gear_l, spec.layout(), role, 4)));
        const double eg = frobenius_error(x, reconstruct_block(compress_block(x, gear, spec.layout(), role, 4)));
        EXPECT_LE(el, eb + 1e-6) << "seed " << seed;
        EXPECT_LE(eg, eb + 1e-6) << "seed " << seed;
      }
    }
  }
}

TEST(CompressBlock, RelativeErrorDecreasesWithBits) {
  const auto spec = outlier_family(7);
  const auto kv = generate_synthetic_kv(spec);
  for (Role role : {Role::kKey, Role::kValue}) {
    const auto& x = role == Role::kKey ? kv.keys : kv.values;
    double prev = INFINITY;
    for (int bits : {2, 4, 8}) {
      GearConfig cfg = kivi2(2, 4);
      cfg.bit_width = bits;
      const double e = rel_error(x, compress_block(x, cfg, spec.layout(), role, 4));
      EXPECT_LT(e, prev) << "b=" << bits;
      prev = e;
    }
  }
}

TEST(CompressBlock, RankFourCapturesKeyResidualEnergy) {
  // Regression on fixed seeds. The outlier channels concentrate the Key
  // residual in a few directions, so rank 4 removes most of its energy.
  // Value residuals of this zero-mean generator are close to isotropic and
  // are only reported.
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto spec = outlier_family(seed);
    const auto kv = generate_synthetic_kv(spec);
    for (Role role : {Role::kKey, Role::kValue}) {
      const auto& x = role == Role::kKey ? kv.keys : kv.values;
      GearConfig cfg = kivi2(2, 0);
      const auto no_rank = compress_block(x, cfg, spec.layout(), role, 0);
      const auto with_rank = compress_block(x, cfg, spec.layout(), role, 4);
      const double before = frobenius_error(x, reconstruct_block(no_rank));
      const double after = frobenius_error(x, reconstruct_block(with_rank));
      const double removed = 1.0 - (after * after) / (before * before);
      RecordProperty("removed_" + to_string(role) + "_seed" + std::to_string(seed),
                     std::to_string(removed));
      if (role == Role::kKey) {
        EXPECT_GE(removed, 0.30) << "seed " << seed;
      } else {
        EXPECT_GT(removed, 0.0) << "seed " << seed;
      }
    }
  }
}

TEST(CompressBlock, CoverageRestrictsLowRankRows) {
  const auto x = random_matrix(40, 16, 9);
  GearConfig cfg;
  cfg.sparsity_percent = 0;
  const auto full = compress_block(x, cfg, {2, 8}, Role::kKey, 4, 100);
  EXPECT_EQ(full.lowrank.row_offset, 0u);
  const auto quarter = compress_block(x, cfg, {2, 8}, Role::kKey, 4, 25);
  EXPECT_EQ(quarter.lowrank.row_offset, 30u);
  EXPECT_EQ(quarter.lowrank.covered_rows(), 10u);
  // Uncovered rows carry only the backbone.
  const auto rec = reconstruct_block(quarter);
  const auto d = quarter.backbone_dense();
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(rec(r, c), d(r, c));
  // p = 0 with s = 0 is the backbone exactly.
  const auto none = compress_block(x, cfg, {2, 8}, Role::kKey, 4, 0);
  EXPECT_EQ(reconstruct_block(none), dequantize(quantize(x, cfg.bit_width, cfg.key_scheme)));
}

TEST(CompressBlock, DeterministicForSeed) {
  const auto x = random_matrix(32, 16, 11);
  GearConfig cfg;
  cfg.seed = 77;
  EXPECT_EQ(compress_block(x, cfg, {2, 8}, Role::kValue, 4),
            compress_block(x, cfg, {2, 8}, Role::kValue, 4));
}

TEST(ErrorReport, ExactReconstructionIsZero) {
  const auto x = random_matrix(6, 4, 12);
  GearConfig cfg;
  cfg.bit_width = kPassthroughBits;
  cfg.sparsity_percent = 0;
  const auto m = error_report(x, compress_block(x, cfg, {1, 4}, Role::kKey, 0));
  EXPECT_EQ(m.frobenius, 0.0);
  EXPECT_EQ(m.relative, 0.0);
  EXPECT_EQ(m.max_abs, 0.0);
}

TEST(ErrorReport, GearBeatsBackboneOnOutlierFamily) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto spec = outlier_family(seed);
    const auto kv = generate_synthetic_kv(spec);
    const auto a = error_report(kv.keys, compress_block(kv.keys, kivi2(0, 0), spec.layout(), Role::kKey, 0));
    const auto b = error_report(kv.keys, compress_block(kv.keys, kivi2(2, 4), spec.layout(), Role::kKey, 4));
    EXPECT_LT(b.relative, a.relative);
    const double shares = b.backbone_share + b.lowrank_share + b.outlier_share;
    EXPECT_NEAR(shares, 1.0, 1e-9);
  }
}
