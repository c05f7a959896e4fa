#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gearkv/gear.hpp"
#include "gearkv/kv_cache.hpp"
#include "gearkv/tensor.hpp"

namespace gearkv {

/// Multi-head single-query attention: per head softmax(q_h K_h^T / sqrt(d_H)) V_h,
/// heads concatenated. Rejects non-finite queries and empty caches.
std::vector<float> attention_step(std::span<const float> query, const DenseMatrix& keys,
                                  const DenseMatrix& values, const HeadLayout& layout);

/// Same result computed directly on the compressed cache. Low-rank terms
/// go through the down/up projections (q_h^T B_h) A_h^T and (w^T A_h) B_h^T
/// instead of materializing A_h B_h^T; outliers contribute sparse dots.
std::vector<float> attention_step_compressed(std::span<const float> query,
                                             const KVCache& cache);

/// Per-head softmax weights over all cached tokens, in head-major order
/// (head h occupies [h * tokens, (h + 1) * tokens)).
std::vector<double> attention_weights(std::span<const float> query, const DenseMatrix& keys,
                                      const HeadLayout& layout);

struct SyntheticKVSpec {
  std::size_t tokens = 256;
  std::size_t channels = 128;
  std::size_t heads = 2;
  std::uint64_t seed = 0;
  std::size_t outlier_channels = 0;
  double outlier_scale = 1.0;
  double token_correlation = 0.0;  // AR(1) coefficient in [0, 1)

  HeadLayout layout() const { return {heads, heads == 0 ? 0 : channels / heads}; }
  void validate() const;
};

struct SyntheticKV {
  DenseMatrix keys;     // tokens x channels
  DenseMatrix values;   // tokens x channels
  DenseMatrix queries;  // tokens x channels
  std::vector<std::size_t> outlier_channels;
};

/// Deterministic synthetic K/V/q streams. Each channel carries a fixed
/// offset plus an AR(1) token process with coefficient `token_correlation`;
/// the designated outlier channels of K are multiplied by `outlier_scale`.
/// Queries are independent Gaussian rows.
SyntheticKV generate_synthetic_kv(const SyntheticKVSpec& spec);

struct DeviationRecord {
  std::size_t step = 0;
  double l2_deviation = 0.0;
  double cosine = 1.0;
};

struct DeviationTrace {
  std::string config_id;
  std::vector<DeviationRecord> records;
  double mean_deviation() const;
};

struct NamedConfig {
  std::string id;
  GearConfig config;
};

/// Prefills exact and compressed caches with the first `spec.tokens` rows
/// of a synthetic stream of spec.tokens + steps tokens, then for each step
/// appends one token and compares compressed attention against exact
/// attention for that step's query.
std::vector<DeviationTrace> run_deviation(const SyntheticKVSpec& spec,
                                          std::span<const NamedConfig> configs,
                                          std::size_t steps);

}  // namespace gearkv
