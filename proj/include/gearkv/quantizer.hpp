#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gearkv/tensor.hpp"

namespace gearkv {

/// How entries are partitioned into quantization groups.
///
/// Per-token schemes group along a row (channels of one token); per-channel
/// schemes group along a column (tokens of one channel). Grouped variants
/// cut the axis into runs of `group_size`; a trailing run shorter than
/// `group_size` becomes its own group. Vector variants use the whole axis.
struct GroupingScheme {
  enum class Kind : std::uint8_t {
    kPerTokenGrouped = 0,
    kPerChannelGrouped = 1,
    kPerTokenVector = 2,
    kPerChannelVector = 3,
  };

  Kind kind = Kind::kPerTokenVector;
  std::size_t group_size = 0;  // only meaningful for grouped kinds

  static GroupingScheme per_token_grouped(std::size_t g) { return {Kind::kPerTokenGrouped, g}; }
  static GroupingScheme per_channel_grouped(std::size_t g) { return {Kind::kPerChannelGrouped, g}; }
  static GroupingScheme per_token_vector() { return {Kind::kPerTokenVector, 0}; }
  static GroupingScheme per_channel_vector() { return {Kind::kPerChannelVector, 0}; }

  bool per_channel() const noexcept {
    return kind == Kind::kPerChannelGrouped || kind == Kind::kPerChannelVector;
  }
  bool grouped() const noexcept {
    return kind == Kind::kPerTokenGrouped || kind == Kind::kPerChannelGrouped;
  }
  /// Length of each group along the grouped axis for an axis of `extent`.
  std::size_t span_along(std::size_t extent) const noexcept {
    return grouped() ? group_size : extent;
  }
  /// Total groups for a rows x cols matrix, counting remainder groups.
  std::size_t group_count(std::size_t rows, std::size_t cols) const;
  void validate() const;
  std::string name() const;

  friend bool operator==(const GroupingScheme&, const GroupingScheme&) = default;
};

/// Quantized backbone: packed b-bit codes plus a scale and zero-point per group.
///
/// Codes are ordered row-major for per-token schemes and column-major for
/// per-channel schemes, so every group is a contiguous run of the code
/// stream. Groups are numbered in the same order.
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int bit_width = 0;
  GroupingScheme scheme;
  std::vector<std::uint8_t> packed;
  std::vector<float> scales;
  std::vector<float> zeros;

  std::size_t entry_count() const noexcept { return rows * cols; }
  std::vector<std::uint8_t> codes() const;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

bool is_supported_bit_width(int bits) noexcept;
std::size_t packed_byte_count(std::size_t count, int bits);

/// Packs codes little-endian within bytes: code i lands at bit offset
/// (i mod (8/b)) * b of byte i / (8/b).
std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, int bits,
                                       std::size_t count);

QuantizedTensor quantize(const DenseMatrix& x, int bits, const GroupingScheme& scheme);
DenseMatrix dequantize(const QuantizedTensor& q);

}  // namespace gearkv
