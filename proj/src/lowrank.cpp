#include "gearkv/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gearkv/error.hpp"
#include "gearkv/random.hpp"

namespace gearkv {

namespace {

// Double-precision working matrix, row-major.
struct Work {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Work(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

Work to_work(const DenseMatrix& m) {
  Work w(m.rows(), m.cols());
  auto src = m.values();
  std::copy(src.begin(), src.end(), w.v.begin());
  return w;
}

DenseMatrix to_dense(const Work& w) {
  std::vector<float> out(w.v.size());
  std::transform(w.v.begin(), w.v.end(), out.begin(), [](double x) { return static_cast<float>(x); });
  return DenseMatrix(w.rows, w.cols, std::move(out));
}

// x (n x d, float) * b (d x r)
Work times(const DenseMatrix& x, const Work& b) {
  Work out(x.rows(), b.cols);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xv = row[k];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += xv * b(k, j);
    }
  }
  return out;
}

// x^T (d x n) * a (n x r)
Work transpose_times(const DenseMatrix& x, const Work& a) {
  Work out(x.cols(), a.cols);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xv = row[k];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < a.cols; ++j) out(k, j) += xv * a(i, j);
    }
  }
  return out;
}

struct QrResult {
  Work q;
  std::size_t rank;
  bool deficient;
};

QrResult householder_qr(Work m) {
  const std::size_t rows = m.rows;
  const std::size_t cols = m.cols;
  if (rows < cols) {
    throw Error(ErrorCode::kShape, "orthonormalize needs rows >= cols, got " +
                                       std::to_string(rows) + "x" + std::to_string(cols));
  }

  double scale = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += m(i, j) * m(i, j);
    scale = std::max(scale, std::sqrt(s));
  }
  const double tolerance = 1e-6 * scale;

  std::vector<std::vector<double>> reflectors(cols);  // empty => skipped column
  std::vector<double> diag(cols, 0.0);
  std::vector<bool> dead(cols, false);

  for (std::size_t j = 0; j < cols; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < rows; ++i) norm += m(i, j) * m(i, j);
    norm = std::sqrt(norm);
    if (norm <= tolerance || norm == 0.0) {
      dead[j] = true;
      continue;
    }
    const double alpha = m(j, j) > 0.0 ? -norm : norm;
    std::vector<double> v(rows - j);
    for (std::size_t i = j; i < rows; ++i) v[i - j] = m(i, j);
    v[0] -= alpha;
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    for (double& x : v) x /= vnorm;
    for (std::size_t c = j; c < cols; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < rows; ++i) dot += v[i - j] * m(i, c);
      for (std::size_t i = j; i < rows; ++i) m(i, c) -= 2.0 * dot * v[i - j];
    }
    diag[j] = alpha;
    reflectors[j] = std::move(v);
  }

  // Q = H_0 ... H_{k-1} [I; 0], applied right-to-left.
  Work q(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) q(j, j) = 1.0;
  for (std::size_t jj = cols; jj-- > 0;) {
    const auto& v = reflectors[jj];
    if (v.empty()) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      double dot = 0.0;
      for (std::size_t i = jj; i < rows; ++i) dot += v[i - jj] * q(i, c);
      if (dot == 0.0) continue;
      for (std::size_t i = jj; i < rows; ++i) q(i, c) -= 2.0 * dot * v[i - jj];
    }
  }

  std::size_t rank = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double sign = dead[j] ? 0.0 : (diag[j] < 0.0 ? -1.0 : 1.0);
    for (std::size_t i = 0; i < rows; ++i) q(i, j) *= sign;
    if (!dead[j]) ++rank;
  }
  return {std::move(q), rank, rank < cols};
}

}  // namespace

OrthonormalBasis orthonormalize(const DenseMatrix& m) {
  auto result = householder_qr(to_work(m));
  return {to_dense(result.q), result.rank, result.deficient};
}

PowerIterationResult power_iteration_svd(const DenseMatrix& residual, std::size_t rank,
                                         std::size_t iterations, std::uint64_t seed) {
  if (iterations == 0) throw Error(ErrorCode::kInvalidConfig, "power iterations must be >= 1");
  PowerIterationResult result;
  const std::size_t limit = std::min(residual.rows(), residual.cols());
  result.rank_clamped = rank > limit;
  result.rank = std::min(rank, limit);
  if (result.rank == 0) return result;
  const std::size_t r = result.rank;

  Work b(residual.cols(), r);
  GaussianStream gauss(seed);
  for (double& x : b.v) x = gauss.next();

  Work a(residual.rows(), r);
  for (std::size_t l = 0; l < iterations; ++l) {
    const bool last = l + 1 == iterations;
    if (last) b = householder_qr(std::move(b)).q;
    a = times(residual, b);
    if (last) a = householder_qr(std::move(a)).q;
    b = transpose_times(residual, a);
  }
  result.factors = {to_dense(a), to_dense(b)};
  return result;
}

DenseMatrix LowRankFactors::reconstruct_head(std::size_t head) const {
  DenseMatrix out(rows, layout.head_dim);
  if (empty()) return out;
  const auto& f = heads.at(head);
  for (std::size_t i = 0; i < f.a.rows(); ++i) {
    auto a_row = f.a.row(i);
    auto dst = out.row(row_offset + i);
    for (std::size_t c = 0; c < layout.head_dim; ++c) {
      auto b_row = f.b.row(c);
      double sum = 0.0;
      for (std::size_t k = 0; k < rank; ++k) sum += static_cast<double>(a_row[k]) * b_row[k];
      dst[c] = static_cast<float>(sum);
    }
  }
  return out;
}

DenseMatrix LowRankFactors::reconstruct() const {
  if (empty()) return DenseMatrix(rows, layout.channels());
  std::vector<DenseMatrix> parts;
  parts.reserve(layout.head_count);
  for (std::size_t h = 0; h < layout.head_count; ++h) parts.push_back(reconstruct_head(h));
  return concat_columns(parts);
}

LowRankFactors solve_heads(const DenseMatrix& residual, const HeadLayout& layout,
                           std::size_t rank, std::size_t iterations, std::uint64_t seed) {
  layout.check(residual.cols());
  LowRankFactors out;
  out.layout = layout;
  out.rows = residual.rows();
  const std::size_t limit = std::min(residual.rows(), layout.head_dim);
  out.rank_clamped = rank > limit;
  out.rank = std::min(rank, limit);
  if (out.rank == 0) return out;

  const auto splits = split_heads(residual, layout);
  out.heads.reserve(layout.head_count);
  for (std::size_t h = 0; h < layout.head_count; ++h) {
    auto solved = power_iteration_svd(splits[h], out.rank, iterations, derive_seed({seed, h}));
    out.heads.push_back(std::move(solved.factors));
  }
  return out;
}

}  // namespace gearkv
