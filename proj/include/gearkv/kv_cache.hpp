#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gearkv/gear.hpp"
#include "gearkv/tensor.hpp"

namespace gearkv {

/// Streaming GEAR cache for one layer.
///
/// Prefill compresses the prompt's K/V into one block each with the
/// prefill rank. Decoded tokens are staged in full precision; when the
/// staging buffer reaches the flush threshold both buffers are compressed
/// with the decode rank and appended as new blocks. Flushed blocks are
/// never touched again.
///
/// Single writer. Const members may be called concurrently when no
/// writer is active.
class KVCache {
 public:
  /// Validates `cfg` (including the flush-threshold law) and compresses
  /// K0/V0. Zero-row inputs produce a cache with no blocks.
  static KVCache prefill(const DenseMatrix& keys, const DenseMatrix& values,
                         const GearConfig& cfg, const HeadLayout& layout);

  void append_token(std::span<const float> key, std::span<const float> value);

  /// (K, V) of shape (total_tokens, channels): reconstructed blocks in
  /// order followed by the raw buffered rows.
  std::pair<DenseMatrix, DenseMatrix> materialize() const;

  const GearConfig& config() const noexcept { return cfg_; }
  const HeadLayout& layout() const noexcept { return layout_; }
  std::size_t channels() const noexcept { return layout_.channels(); }
  std::size_t total_tokens() const noexcept { return total_tokens_; }
  std::size_t buffered_tokens() const noexcept { return key_buffer_.rows(); }
  std::size_t prefill_tokens() const noexcept { return prefill_tokens_; }

  const std::vector<CompressedBlock>& key_blocks() const noexcept { return key_blocks_; }
  const std::vector<CompressedBlock>& value_blocks() const noexcept { return value_blocks_; }
  const DenseMatrix& key_buffer() const noexcept { return key_buffer_; }
  const DenseMatrix& value_buffer() const noexcept { return value_buffer_; }

  /// "GKV1" snapshot of the full state; decode(encode(s)) == s.
  std::vector<std::byte> encode() const;
  static KVCache decode(std::span<const std::byte> bytes);

  friend bool operator==(const KVCache&, const KVCache&) = default;

 private:
  KVCache(GearConfig cfg, HeadLayout layout);
  void flush();

  GearConfig cfg_;
  HeadLayout layout_;
  std::vector<CompressedBlock> key_blocks_;
  std::vector<CompressedBlock> value_blocks_;
  DenseMatrix key_buffer_;
  DenseMatrix value_buffer_;
  std::size_t total_tokens_ = 0;
  std::size_t prefill_tokens_ = 0;
};

}  // namespace gearkv
