#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gearkv/tensor.hpp"

namespace gearkv {

/// Axis along which extreme entries are ranked: Channel ranks within each
/// column (Key cache), Token ranks within each row (Value cache).
enum class OutlierAxis : std::uint8_t { kChannel = 0, kToken = 1 };

struct OutlierEntry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  float value = 0.0f;

  friend bool operator==(const OutlierEntry&, const OutlierEntry&) = default;
};

/// Coordinate-format sparse matrix of extracted outliers, sorted by
/// (row, col).
struct SparseOutliers {
  std::size_t rows = 0;
  std::size_t cols = 0;
  OutlierAxis axis = OutlierAxis::kChannel;
  std::vector<OutlierEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  DenseMatrix to_dense() const;
  /// Adds every entry into `x` in place.
  void scatter_add(DenseMatrix& x) const;

  friend bool operator==(const SparseOutliers&, const SparseOutliers&) = default;
};

struct OutlierSplit {
  SparseOutliers outliers;
  DenseMatrix remainder;
};

/// Entries extracted per side (max and min) for a vector of `length` at
/// `percent` sparsity: floor(percent/100 * length / 2).
std::size_t outliers_per_side(double percent, std::size_t length);

/// Moves the k largest and k smallest entries of each vector along `axis`
/// into a sparse matrix; the remainder holds zeros at those positions.
/// Equal values are taken in order of smallest index along the vector;
/// maxima are chosen before minima.
OutlierSplit filter_outliers(const DenseMatrix& x, double percent, OutlierAxis axis);

}  // namespace gearkv
