#include "gearkv/outliers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gearkv/error.hpp"

namespace gearkv {

DenseMatrix SparseOutliers::to_dense() const {
  DenseMatrix out(rows, cols);
  scatter_add(out);
  return out;
}

void SparseOutliers::scatter_add(DenseMatrix& x) const {
  if (x.rows() != rows || x.cols() != cols) {
    throw Error(ErrorCode::kShape, "sparse outliers do not match target shape");
  }
  for (const auto& e : entries) x(e.row, e.col) += e.value;
}

std::size_t outliers_per_side(double percent, std::size_t length) {
  if (!(percent >= 0.0 && percent <= 100.0)) {
    throw Error(ErrorCode::kInvalidConfig,
                "sparsity percent must lie in [0, 100], got " + std::to_string(percent));
  }
  // percent * length is exact for the integer-valued percents used in
  // practice, so the floor does not suffer from 0.02 * 100 style rounding.
  return static_cast<std::size_t>(std::floor(percent * static_cast<double>(length) / 200.0));
}

OutlierSplit filter_outliers(const DenseMatrix& x, double percent, OutlierAxis axis) {
  const bool by_channel = axis == OutlierAxis::kChannel;
  const std::size_t length = by_channel ? x.rows() : x.cols();
  const std::size_t vectors = by_channel ? x.cols() : x.rows();
  const std::size_t k = outliers_per_side(percent, length);

  OutlierSplit split{SparseOutliers{x.rows(), x.cols(), axis, {}}, x};
  if (k == 0) return split;

  auto at = [&](std::size_t vec, std::size_t i) -> std::pair<std::size_t, std::size_t> {
    return by_channel ? std::pair{i, vec} : std::pair{vec, i};
  };

  std::vector<std::size_t> order(length);
  std::vector<bool> taken(length);
  auto& entries = split.outliers.entries;
  entries.reserve(2 * k * vectors);

  for (std::size_t vec = 0; vec < vectors; ++vec) {
    auto value = [&](std::size_t i) {
      auto [r, c] = at(vec, i);
      return x(r, c);
    };
    std::fill(taken.begin(), taken.end(), false);

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const float va = value(a), vb = value(b);
                        return va > vb || (va == vb && a < b);
                      });
    for (std::size_t j = 0; j < k; ++j) taken[order[j]] = true;

    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rest = std::stable_partition(order.begin(), order.end(),
                                      [&](std::size_t i) { return !taken[i]; });
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), rest,
                      [&](std::size_t a, std::size_t b) {
                        const float va = value(a), vb = value(b);
                        return va < vb || (va == vb && a < b);
                      });
    for (std::size_t j = 0; j < k; ++j) taken[order[j]] = true;

    for (std::size_t i = 0; i < length; ++i) {
      if (!taken[i]) continue;
      auto [r, c] = at(vec, i);
      entries.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), x(r, c)});
      split.remainder(r, c) = 0.0f;
    }
  }
  std::sort(entries.begin(), entries.end(), [](const OutlierEntry& a, const OutlierEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return split;
}

}  // namespace gearkv
