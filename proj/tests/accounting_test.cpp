#include <gtest/gtest.h>

#include <cmath>

#include "gearkv/accounting.hpp"
#include "gearkv/attention.hpp"
#include "gearkv/error.hpp"

using namespace gearkv;

namespace {

constexpr std::size_t kPrefill = 900, kGen = 256, kChannels = 1024, kHeads = 8;

GearConfig kcvt(int bits) {
  GearConfig cfg;
  cfg.bit_width = bits;
  cfg.sparsity_percent = 0;
  cfg.rank_prefill = cfg.rank_decode = 0;
  cfg.buffer_size = 20;
  return cfg;
}

GearConfig kivi(int bits, double sparsity = 0, std::size_t rank = 0, std::size_t g = 64) {
  GearConfig cfg;
  cfg.bit_width = bits;
  cfg.sparsity_percent = sparsity;
  cfg.rank_prefill = rank;
  cfg.rank_decode = rank == 0 ? 0 : 2;
  cfg.buffer_size = g;
  cfg.key_scheme = GroupingScheme::per_channel_grouped(g);
  cfg.value_scheme = GroupingScheme::per_token_grouped(g);
  return cfg;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Spreadsheet-style tally for a KIVI backbone without sparse or low-rank
// terms: per-channel Key groups, per-token Value groups, full buffer.
double kivi_sheet_bytes(int bits, std::size_t g, std::size_t n0, std::size_t ngen,
                        std::size_t d) {
  double bytes = 0;
  auto block = [&](std::size_t rows) {
    bytes += 2.0 * std::ceil(rows * d * bits / 8.0);          // K + V codes
    bytes += 4.0 * static_cast<double>(ceil_div(rows, g) * d);  // K scale + zero
    bytes += 4.0 * static_cast<double>(rows * ceil_div(d, g));  // V scale + zero
  };
  block(n0);
  for (std::size_t done = 0; done < ngen; done += g) block(std::min(g, ngen - done));
  bytes += 2.0 * 2.0 * static_cast<double>(g * d);  // buffer, K + V at FP16
  return bytes;
}

KVCache streamed_cache(const GearConfig& cfg, std::size_t n0, std::size_t ngen,
                       std::size_t channels = 64, std::size_t heads = 2) {
  SyntheticKVSpec spec;
  spec.tokens = n0 + ngen;
  spec.channels = channels;
  spec.heads = heads;
  spec.seed = 17;
  spec.token_correlation = 0.5;
  const auto kv = generate_synthetic_kv(spec);
  auto cache = KVCache::prefill(slice_rows(kv.keys, 0, n0), slice_rows(kv.values, 0, n0), cfg,
                                spec.layout());
  for (std::size_t t = n0; t < n0 + ngen; ++t) cache.append_token(kv.keys.row(t), kv.values.row(t));
  return cache;
}

void expect_same_bytes(const MemoryReport& a, const MemoryReport& b) {
  EXPECT_EQ(a.code_bytes, b.code_bytes);
  EXPECT_EQ(a.scale_zero_bytes, b.scale_zero_bytes);
  EXPECT_EQ(a.sparse_value_bytes, b.sparse_value_bytes);
  EXPECT_EQ(a.sparse_index_bytes, b.sparse_index_bytes);
  EXPECT_EQ(a.lowrank_bytes, b.lowrank_bytes);
  EXPECT_EQ(a.buffer_bytes, b.buffer_bytes);
  EXPECT_EQ(a.total_bytes, b.total_bytes);
  EXPECT_EQ(a.fp16_bytes, b.fp16_bytes);
}

}  // namespace

TEST(Account, PassthroughIsHundredPercent) {
  GearConfig cfg = kcvt(kPassthroughBits);
  const auto r = account(cfg, kPrefill, kGen, kChannels, kHeads);
  EXPECT_DOUBLE_EQ(r.percent_of_fp16, 100.0);
  EXPECT_EQ(r.buffer_bytes, 0.0);
}

TEST(Account, KcvtFourBitNearTableValue) {
  const auto r = account(kcvt(4), kPrefill, kGen, kChannels, kHeads);
  EXPECT_NEAR(r.percent_of_fp16, 26.7, 2.0);
}

TEST(Account, KiviTwoBitMatchesSheetToTheByte) {
  const auto r = account(kivi(2), kPrefill, kGen, kChannels, kHeads);
  const double sheet = kivi_sheet_bytes(2, 64, kPrefill, kGen, kChannels);
  EXPECT_EQ(sheet, 1005824.0);
  EXPECT_EQ(r.total_bytes, sheet);
  EXPECT_EQ(r.fp16_bytes, 4.0 * 1156 * 1024);
  EXPECT_NEAR(r.percent_of_fp16, 22.7, 2.0);
}

TEST(Account, SheetAgreesAcrossShapes) {
  for (std::size_t g : {16u, 64u})
    for (int bits : {2, 4, 8})
      for (std::size_t ngen : {0u, 1u, 64u, 100u}) {
        const auto r = account(kivi(bits, 0, 0, g), 333, ngen, 256, 4);
        EXPECT_EQ(r.total_bytes, kivi_sheet_bytes(bits, g, 333, ngen, 256))
            << "g=" << g << " b=" << bits << " ngen=" << ngen;
      }
}

TEST(Account, HalfConventionChargesHalfBuffer) {
  AccountingOptions half;
  half.buffer = BufferConvention::kHalfCapacity;
  const auto full = account(kcvt(4), kPrefill, kGen, kChannels, kHeads);
  const auto r = account(kcvt(4), kPrefill, kGen, kChannels, kHeads, half);
  EXPECT_DOUBLE_EQ(r.buffer_bytes * 2, full.buffer_bytes);
  EXPECT_EQ(r.code_bytes, full.code_bytes);
}

TEST(Account, IndexBitsScaleIndexBytes) {
  AccountingOptions wide;
  wide.index_bits = 32;
  const auto a = account(kivi(2, 2, 4), kPrefill, kGen, kChannels, kHeads);
  const auto b = account(kivi(2, 2, 4), kPrefill, kGen, kChannels, kHeads, wide);
  EXPECT_DOUBLE_EQ(b.sparse_index_bytes, 2 * a.sparse_index_bytes);
  wide.index_bits = 12;
  EXPECT_THROW(account(kivi(2), kPrefill, kGen, kChannels, kHeads, wide), Error);
}

TEST(Account, PercentStrictlyIncreasesInEachKnob) {
  auto pct = [](const GearConfig& cfg) {
    return account(cfg, kPrefill, kGen, kChannels, kHeads).percent_of_fp16;
  };
  // Bits.
  for (auto make : {+[](int b) { return kcvt(b); }, +[](int b) { return kivi(b, 2, 4); }}) {
    EXPECT_LT(pct(make(2)), pct(make(4)));
    EXPECT_LT(pct(make(4)), pct(make(8)));
  }
  // Sparsity.
  double prev = -1;
  for (double s : {0.0, 1.0, 2.0, 5.0, 10.0}) {
    const double p = pct(kivi(2, s, 4));
    EXPECT_GT(p, prev) << "s=" << s;
    prev = p;
  }
  // Rank.
  prev = -1;
  for (std::size_t r : {0u, 1u, 2u, 4u, 8u}) {
    GearConfig cfg = kivi(2, 2, r);
    cfg.rank_decode = r;
    const double p = pct(cfg);
    EXPECT_GT(p, prev) << "r=" << r;
    prev = p;
  }
  // Buffer size. Vector-grouped Keys pay one scale/zero per channel per
  // decode block, so KCVT only grows with n_b once n_b > sqrt(n_gen).
  prev = -1;
  for (std::size_t nb : {20u, 40u, 64u, 128u}) {
    GearConfig cfg = kcvt(4);
    cfg.buffer_size = nb;
    const double p = pct(cfg);
    EXPECT_GT(p, prev) << "nb=" << nb;
    prev = p;
  }
  prev = -1;
  for (std::size_t nb : {64u, 128u, 256u}) {
    GearConfig cfg = kivi(2, 2, 4);
    cfg.buffer_size = nb;
    const double p = pct(cfg);
    EXPECT_GT(p, prev) << "kivi nb=" << nb;
    prev = p;
  }
}

TEST(Account, KcvtBufferCrossoverBelowSqrtGen) {
  // Pins the documented exception: at n_b = 10 the extra Key scales of 26
  // decode blocks outweigh ten buffered tokens.
  GearConfig small = kcvt(4), standard = kcvt(4);
  small.buffer_size = 10;
  const auto a = account(small, kPrefill, kGen, kChannels, kHeads);
  const auto b = account(standard, kPrefill, kGen, kChannels, kHeads);
  EXPECT_GT(a.percent_of_fp16, b.percent_of_fp16);
  EXPECT_EQ(a.scale_zero_bytes - b.scale_zero_bytes, 4.0 * (26 - 13) * kChannels);
}

TEST(AccountState, EmptyStateIsZero) {
  GearConfig cfg;
  const auto cache = KVCache::prefill(DenseMatrix(0, 64), DenseMatrix(0, 64), cfg, {2, 32});
  const auto r = account_state(cache);
  EXPECT_EQ(r.total_bytes, 0.0);
  EXPECT_EQ(r.fp16_bytes, 0.0);
}

TEST(AccountState, PrefillOnlyMatchesFormula) {
  for (const auto& cfg : {kcvt(4), kivi(2, 2, 4, 16), GearConfig{}}) {
    const auto cache = streamed_cache(cfg, 120, 0);
    AccountingOptions opts;
    opts.buffer_occupancy = 0;
    expect_same_bytes(account_state(cache), account(cfg, 120, 0, 64, 2, opts));
  }
}

TEST(AccountState, MidBufferMatchesFormulaWithOccupancy) {
  GearConfig partial = kivi(4, 5, 3, 16);
  partial.coverage_percent = 30;
  GearConfig pass = kcvt(kPassthroughBits);
  for (const auto& cfg : {kcvt(2), kivi(2, 2, 4, 16), GearConfig{}, partial, pass}) {
    for (std::size_t ngen : {0u, 5u, 20u, 47u, 80u}) {
      const auto cache = streamed_cache(cfg, 100, ngen);
      AccountingOptions opts;
      opts.buffer_occupancy = cache.buffered_tokens();
      opts.index_bits = 32;
      expect_same_bytes(account_state(cache, 32), account(cfg, 100, ngen, 64, 2, opts));
    }
  }
}

TEST(AccountState, RejectsUnreachableOccupancy) {
  AccountingOptions opts;
  opts.buffer_occupancy = 20;  // must stay below the buffer size
  EXPECT_THROW(account(kcvt(4), 100, 40, 64, 2, opts), Error);
  opts.buffer_occupancy = 3;  // 40 - 3 is not a multiple of 20
  EXPECT_THROW(account(kcvt(4), 100, 40, 64, 2, opts), Error);
}
