#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>

#include "gearkv/lowrank.hpp"
#include "gearkv/outliers.hpp"
#include "gearkv/quantizer.hpp"
#include "gearkv/tensor.hpp"

namespace gearkv {

enum class Role : std::uint8_t { kKey = 0, kValue = 1 };

std::string to_string(Role role);

/// Bit width that disables compression: blocks keep the raw values.
inline constexpr int kPassthroughBits = 16;

struct GearConfig {
  int bit_width = 4;
  double sparsity_percent = 2.0;  // 0 disables the sparse term (GEAR-L)
  std::size_t rank_prefill = 4;   // 0 disables low-rank (outlier-aware quantization)
  std::size_t rank_decode = 2;
  std::size_t buffer_size = 20;
  GroupingScheme key_scheme = GroupingScheme::per_channel_vector();
  GroupingScheme value_scheme = GroupingScheme::per_token_vector();
  OutlierAxis key_outlier_axis = OutlierAxis::kChannel;
  OutlierAxis value_outlier_axis = OutlierAxis::kToken;
  std::size_t power_iterations = 2;
  std::uint64_t seed = 0;
  double coverage_percent = 100.0;  // most recent prefill rows receiving low-rank

  bool passthrough() const noexcept { return bit_width == kPassthroughBits; }
  const GroupingScheme& scheme_for(Role role) const {
    return role == Role::kKey ? key_scheme : value_scheme;
  }
  OutlierAxis outlier_axis_for(Role role) const {
    return role == Role::kKey ? key_outlier_axis : value_outlier_axis;
  }
  /// Buffer length that triggers a flush. Per-channel grouped backbones
  /// need it to be a multiple of their group size.
  std::size_t flush_threshold() const;
  void validate() const;

  friend bool operator==(const GearConfig&, const GearConfig&) = default;
};

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

/// Quantized backbone, or the raw rows for pass-through configs.
using Backbone = std::variant<QuantizedTensor, DenseMatrix>;

struct CompressedBlock {
  Role role = Role::kKey;
  TokenRange tokens;
  Backbone backbone;
  SparseOutliers outliers;
  LowRankFactors lowrank;

  std::size_t rows() const noexcept { return tokens.size(); }
  std::size_t cols() const noexcept { return outliers.cols; }
  DenseMatrix backbone_dense() const;

  friend bool operator==(const CompressedBlock&, const CompressedBlock&) = default;
};

/// Compresses X into backbone + sparse outliers + head-wise low-rank
/// residual. Only the most recent ceil(coverage%/100 * rows) rows feed the
/// low-rank solver. `first_token` only labels the block's token range.
CompressedBlock compress_block(const DenseMatrix& x, const GearConfig& cfg,
                               const HeadLayout& layout, Role role, std::size_t rank,
                               double coverage_percent = 100.0, std::size_t first_token = 0);

DenseMatrix reconstruct_block(const CompressedBlock& block);

struct ErrorMetrics {
  double frobenius = 0.0;
  double relative = 0.0;
  double max_abs = 0.0;
  // Squared-norm share of each component in the reconstruction's parts.
  double backbone_share = 0.0;
  double lowrank_share = 0.0;
  double outlier_share = 0.0;
};

ErrorMetrics error_report(const DenseMatrix& x, const CompressedBlock& block);

}  // namespace gearkv
