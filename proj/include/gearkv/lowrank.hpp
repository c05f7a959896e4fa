#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gearkv/tensor.hpp"

namespace gearkv {

/// One head's factor pair; the head's correction is a * b^T.
struct HeadFactors {
  DenseMatrix a;  // covered rows x r
  DenseMatrix b;  // head_dim x r

  friend bool operator==(const HeadFactors&, const HeadFactors&) = default;
};

struct OrthonormalBasis {
  DenseMatrix q;
  std::size_t rank = 0;          // number of non-zero columns in q
  bool rank_deficient = false;   // some columns were dependent and zeroed
};

/// Householder thin QR returning Q with positive-diagonal R convention.
/// Requires rows >= cols. Columns that are numerically dependent on the
/// preceding ones come back as zero columns and set `rank_deficient`.
OrthonormalBasis orthonormalize(const DenseMatrix& m);

struct PowerIterationResult {
  HeadFactors factors;   // empty matrices when the effective rank is 0
  std::size_t rank = 0;  // effective rank after clamping
  bool rank_clamped = false;
};

/// Rank-r approximation a * b^T of `residual` by `iterations` rounds of
/// power iteration. Only the last round orthonormalizes (b before the
/// forward product, a after it), which leaves a with orthonormal columns
/// and b = residual^T a. The initial b is a Gaussian draw from `seed`.
PowerIterationResult power_iteration_svd(const DenseMatrix& residual, std::size_t rank,
                                         std::size_t iterations, std::uint64_t seed);

/// Head-wise low-rank correction for a block of `rows` tokens. The A
/// factors only cover rows [row_offset, rows); earlier rows get no
/// correction.
struct LowRankFactors {
  HeadLayout layout;
  std::size_t rows = 0;
  std::size_t row_offset = 0;
  std::size_t rank = 0;
  bool rank_clamped = false;
  std::vector<HeadFactors> heads;

  bool empty() const noexcept { return heads.empty(); }
  std::size_t covered_rows() const noexcept { return rows - row_offset; }
  /// Dense rows x channels matrix Concat(A_1 B_1^T, ..., A_H B_H^T).
  DenseMatrix reconstruct() const;
  DenseMatrix reconstruct_head(std::size_t head) const;

  friend bool operator==(const LowRankFactors&, const LowRankFactors&) = default;
};

/// Solves every head split of `residual` independently; head h draws its
/// initialization from derive_seed({seed, h}).
LowRankFactors solve_heads(const DenseMatrix& residual, const HeadLayout& layout,
                           std::size_t rank, std::size_t iterations, std::uint64_t seed);

}  // namespace gearkv
