#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "gearkv/gear.hpp"
#include "gearkv/kv_cache.hpp"

namespace gearkv {

/// Byte counts of a compressed K+V cache, with everything stored at 16 bits
/// except the packed integer codes.
struct MemoryReport {
  double code_bytes = 0.0;
  double scale_zero_bytes = 0.0;
  double sparse_value_bytes = 0.0;
  double sparse_index_bytes = 0.0;
  double lowrank_bytes = 0.0;
  double buffer_bytes = 0.0;
  double total_bytes = 0.0;
  double fp16_bytes = 0.0;  // 2 bytes x tokens x channels x 2 matrices
  double percent_of_fp16 = 0.0;

  void finalize();
};

/// How the streaming buffer is charged in the closed-form model.
enum class BufferConvention {
  kFullCapacity,  // n_b resident full-precision tokens
  kHalfCapacity,  // n_b / 2 tokens, the mean occupancy over a generation
};

struct AccountingOptions {
  BufferConvention buffer = BufferConvention::kFullCapacity;
  std::size_t index_bits = 16;
  /// When set, exactly this many generated tokens sit in the buffer and
  /// the remaining n_gen - occupancy tokens form n_b-sized blocks; this is
  /// the point-in-time model that account_state reproduces.
  std::optional<std::size_t> buffer_occupancy;
};

/// Closed-form model. Without an explicit occupancy every token is treated
/// as compressed (prefill block plus ceil(n_gen / n_b) decode blocks, the
/// last one partial) and the buffer term is added on top.
MemoryReport account(const GearConfig& cfg, std::size_t n_prefill, std::size_t n_gen,
                     std::size_t channels, std::size_t heads,
                     const AccountingOptions& options = {});

/// Byte counts measured from a live cache's components.
MemoryReport account_state(const KVCache& cache, std::size_t index_bits = 16);

}  // namespace gearkv
