#include "gearkv/accounting.hpp"

#include <cmath>

#include "gearkv/error.hpp"
#include "gearkv/outliers.hpp"

namespace gearkv {

namespace {

constexpr double kHalfBytes = 2.0;

// Adds the modeled cost of one K block and one V block of `rows` tokens.
void add_block_pair(MemoryReport& r, const GearConfig& cfg, std::size_t rows,
                    std::size_t channels, std::size_t head_dim, std::size_t heads,
                    std::size_t rank, double coverage_percent, double index_bytes) {
  if (rows == 0) return;
  if (cfg.passthrough()) {
    r.code_bytes += 2.0 * kHalfBytes * static_cast<double>(rows * channels);
    return;
  }
  for (Role role : {Role::kKey, Role::kValue}) {
    r.code_bytes += static_cast<double>(packed_byte_count(rows * channels, cfg.bit_width));
    r.scale_zero_bytes +=
        2.0 * kHalfBytes * static_cast<double>(cfg.scheme_for(role).group_count(rows, channels));

    const bool by_channel = cfg.outlier_axis_for(role) == OutlierAxis::kChannel;
    const std::size_t length = by_channel ? rows : channels;
    const std::size_t vectors = by_channel ? channels : rows;
    const auto extracted =
        static_cast<double>(2 * outliers_per_side(cfg.sparsity_percent, length) * vectors);
    r.sparse_value_bytes += kHalfBytes * extracted;
    r.sparse_index_bytes += 2.0 * index_bytes * extracted;

    const auto covered =
        static_cast<std::size_t>(std::ceil(coverage_percent * static_cast<double>(rows) / 100.0));
    const std::size_t effective = std::min({rank, covered, head_dim});
    if (effective > 0) {
      r.lowrank_bytes += kHalfBytes * static_cast<double>(heads * (covered + head_dim) * effective);
    }
  }
}

}  // namespace

void MemoryReport::finalize() {
  total_bytes = code_bytes + scale_zero_bytes + sparse_value_bytes + sparse_index_bytes +
                lowrank_bytes + buffer_bytes;
  percent_of_fp16 = fp16_bytes > 0.0 ? 100.0 * total_bytes / fp16_bytes : 0.0;
}

MemoryReport account(const GearConfig& cfg, std::size_t n_prefill, std::size_t n_gen,
                     std::size_t channels, std::size_t heads, const AccountingOptions& options) {
  cfg.validate();
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw Error(ErrorCode::kInvalidConfig, "accounting needs heads dividing channels");
  }
  if (options.index_bits == 0 || options.index_bits % 8 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "index bits must be a positive multiple of 8");
  }
  const std::size_t head_dim = channels / heads;
  const double index_bytes = static_cast<double>(options.index_bits) / 8.0;
  const std::size_t nb = cfg.buffer_size;

  MemoryReport r;
  r.fp16_bytes = 2.0 * kHalfBytes * static_cast<double>((n_prefill + n_gen) * channels);
  add_block_pair(r, cfg, n_prefill, channels, head_dim, heads, cfg.rank_prefill,
                 cfg.coverage_percent, index_bytes);

  double buffered_tokens = 0.0;
  if (options.buffer_occupancy) {
    const std::size_t occupancy = *options.buffer_occupancy;
    if (occupancy > n_gen || occupancy >= nb || (n_gen - occupancy) % nb != 0) {
      throw Error(ErrorCode::kInvalidConfig,
                  "buffer occupancy " + std::to_string(occupancy) +
                      " is unreachable with n_gen " + std::to_string(n_gen) + " and buffer " +
                      std::to_string(nb));
    }
    for (std::size_t i = 0; i < (n_gen - occupancy) / nb; ++i) {
      add_block_pair(r, cfg, nb, channels, head_dim, heads, cfg.rank_decode, 100.0, index_bytes);
    }
    buffered_tokens = static_cast<double>(occupancy);
  } else {
    for (std::size_t done = 0; done < n_gen; done += nb) {
      add_block_pair(r, cfg, std::min(nb, n_gen - done), channels, head_dim, heads,
                     cfg.rank_decode, 100.0, index_bytes);
    }
    if (!cfg.passthrough()) {
      buffered_tokens = options.buffer == BufferConvention::kFullCapacity
                            ? static_cast<double>(nb)
                            : static_cast<double>(nb) / 2.0;
    }
  }
  r.buffer_bytes = 2.0 * kHalfBytes * buffered_tokens * static_cast<double>(channels);
  r.finalize();
  return r;
}

MemoryReport account_state(const KVCache& cache, std::size_t index_bits) {
  if (index_bits == 0 || index_bits % 8 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "index bits must be a positive multiple of 8");
  }
  const double index_bytes = static_cast<double>(index_bits) / 8.0;
  const std::size_t channels = cache.channels();

  MemoryReport r;
  r.fp16_bytes = 2.0 * kHalfBytes * static_cast<double>(cache.total_tokens() * channels);
  for (const auto* blocks : {&cache.key_blocks(), &cache.value_blocks()}) {
    for (const auto& b : *blocks) {
      if (const auto* q = std::get_if<QuantizedTensor>(&b.backbone)) {
        r.code_bytes += static_cast<double>(q->packed.size());
        r.scale_zero_bytes += kHalfBytes * static_cast<double>(q->scales.size() + q->zeros.size());
      } else {
        r.code_bytes += kHalfBytes * static_cast<double>(std::get<DenseMatrix>(b.backbone).size());
      }
      const auto extracted = static_cast<double>(b.outliers.entries.size());
      r.sparse_value_bytes += kHalfBytes * extracted;
      r.sparse_index_bytes += 2.0 * index_bytes * extracted;
      for (const auto& h : b.lowrank.heads) {
        r.lowrank_bytes += kHalfBytes * static_cast<double>(h.a.size() + h.b.size());
      }
    }
  }
  r.buffer_bytes = kHalfBytes * static_cast<double>(cache.key_buffer().size() +
                                                    cache.value_buffer().size());
  r.finalize();
  return r;
}

}  // namespace gearkv
