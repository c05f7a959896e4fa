#include "gearkv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "bytes.hpp"
#include "gearkv/error.hpp"

namespace gearkv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNonFinite: return "non_finite";
  }
  return "unknown";
}

namespace {

void require_same_shape(const DenseMatrix& x, const DenseMatrix& y, const char* op) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw Error(ErrorCode::kShape,
                std::string(op) + ": shape mismatch " + std::to_string(x.rows()) + "x" +
                    std::to_string(x.cols()) + " vs " + std::to_string(y.rows()) + "x" +
                    std::to_string(y.cols()));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {
  if (cols == 0) throw Error(ErrorCode::kShape, "matrix needs at least one column");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (cols == 0) throw Error(ErrorCode::kShape, "matrix needs at least one column");
  if (values_.size() != rows * cols) {
    throw Error(ErrorCode::kShape, "value count " + std::to_string(values_.size()) +
                                       " does not match " + std::to_string(rows) + "x" +
                                       std::to_string(cols));
  }
  if (!std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::kNonFinite, "matrix contains non-finite values");
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  if (rows.size() == 0) throw Error(ErrorCode::kShape, "from_rows needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<float> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw Error(ErrorCode::kShape, "ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return DenseMatrix(rows.size(), cols, std::move(values));
}

void DenseMatrix::append_row(std::span<const float> row) {
  if (row.size() != cols_) {
    throw Error(ErrorCode::kShape, "append_row: expected " + std::to_string(cols_) +
                                       " values, got " + std::to_string(row.size()));
  }
  if (!std::all_of(row.begin(), row.end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::kNonFinite, "append_row: non-finite value");
  }
  values_.insert(values_.end(), row.begin(), row.end());
  ++rows_;
}

DenseMatrix DenseMatrix::transposed() const {
  if (rows_ == 0) throw Error(ErrorCode::kShape, "cannot transpose a matrix with no rows");
  DenseMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

void HeadLayout::check(std::size_t cols) const {
  if (head_count == 0 || head_dim == 0) {
    throw Error(ErrorCode::kShape, "head layout needs head_count >= 1 and head_dim >= 1");
  }
  if (channels() != cols) {
    throw Error(ErrorCode::kShape, "head layout " + std::to_string(head_count) + "x" +
                                       std::to_string(head_dim) + " does not cover " +
                                       std::to_string(cols) + " channels");
  }
}

std::vector<DenseMatrix> split_heads(const DenseMatrix& x, const HeadLayout& layout) {
  layout.check(x.cols());
  std::vector<DenseMatrix> heads;
  heads.reserve(layout.head_count);
  for (std::size_t h = 0; h < layout.head_count; ++h) {
    DenseMatrix head(x.rows(), layout.head_dim);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto src = x.row(r).subspan(h * layout.head_dim, layout.head_dim);
      std::copy(src.begin(), src.end(), head.row(r).begin());
    }
    heads.push_back(std::move(head));
  }
  return heads;
}

DenseMatrix concat_columns(std::span<const DenseMatrix> parts) {
  if (parts.empty()) throw Error(ErrorCode::kShape, "concat_columns of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(ErrorCode::kShape, "concat_columns: row mismatch");
    cols += p.cols();
  }
  DenseMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r).begin();
    for (const auto& p : parts) dst = std::copy(p.row(r).begin(), p.row(r).end(), dst);
  }
  return out;
}

DenseMatrix concat_rows(std::span<const DenseMatrix> parts) {
  if (parts.empty()) throw Error(ErrorCode::kShape, "concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::vector<float> values;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(ErrorCode::kShape, "concat_rows: column mismatch");
    values.insert(values.end(), p.values().begin(), p.values().end());
    rows += p.rows();
  }
  return DenseMatrix(rows, cols, std::move(values));
}

DenseMatrix slice_rows(const DenseMatrix& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) throw Error(ErrorCode::kShape, "slice_rows out of range");
  auto v = x.values();
  return DenseMatrix(end - begin, x.cols(),
                     std::vector<float>(v.begin() + static_cast<std::ptrdiff_t>(begin * x.cols()),
                                        v.begin() + static_cast<std::ptrdiff_t>(end * x.cols())));
}

DenseMatrix add(const DenseMatrix& x, const DenseMatrix& y) {
  require_same_shape(x, y, "add");
  DenseMatrix out = x;
  auto o = out.values();
  auto b = y.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
  return out;
}

DenseMatrix subtract(const DenseMatrix& x, const DenseMatrix& y) {
  require_same_shape(x, y, "subtract");
  DenseMatrix out = x;
  auto o = out.values();
  auto b = y.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= b[i];
  return out;
}

double frobenius_norm(const DenseMatrix& x) {
  double sum = 0.0;
  for (float v : x.values()) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

double frobenius_error(const DenseMatrix& x, const DenseMatrix& y) {
  require_same_shape(x, y, "frobenius_error");
  double sum = 0.0;
  auto a = x.values();
  auto b = y.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

double max_abs_error(const DenseMatrix& x, const DenseMatrix& y) {
  require_same_shape(x, y, "max_abs_error");
  double worst = 0.0;
  auto a = x.values();
  auto b = y.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

namespace {
constexpr char kTensorMagic[5] = "KVT1";
constexpr std::size_t kTensorHeaderBytes = 16;
}  // namespace

std::vector<std::byte> encode_tensor(const DenseMatrix& x) {
  if (x.rows() > std::numeric_limits<std::uint32_t>::max() ||
      x.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kFormat, "dimension overflow");
  }
  detail::ByteWriter w;
  w.tag(kTensorMagic);
  w.u32(static_cast<std::uint32_t>(x.rows()));
  w.u32(static_cast<std::uint32_t>(x.cols()));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.f32s(x.values());
  return w.take();
}

DenseMatrix decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < kTensorHeaderBytes) throw Error(ErrorCode::kFormat, "truncated header");
  detail::ByteReader r(bytes, "header");
  if (!r.tag_matches(kTensorMagic)) throw Error(ErrorCode::kFormat, "bad magic");
  const std::uint64_t rows = r.u32();
  const std::uint64_t cols = r.u32();
  const std::uint8_t dtype = r.u8();
  r.u8();
  r.u8();
  r.u8();
  if (dtype != 0) throw Error(ErrorCode::kFormat, "unsupported dtype tag " + std::to_string(dtype));
  if (cols == 0) throw Error(ErrorCode::kFormat, "dimension overflow: zero columns");
  const std::uint64_t count = rows * cols;
  if (count > (std::numeric_limits<std::size_t>::max() / 4) ||
      count > std::numeric_limits<std::ptrdiff_t>::max() / 4) {
    throw Error(ErrorCode::kFormat, "dimension overflow");
  }
  if (r.remaining() < count * 4) throw Error(ErrorCode::kFormat, "truncated payload");
  if (r.remaining() > count * 4) throw Error(ErrorCode::kFormat, "trailing bytes after payload");
  r.set_context("payload");
  return DenseMatrix(rows, cols, r.f32s(count));
}

void save_tensor(const DenseMatrix& x, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(x);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

DenseMatrix load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace gearkv
