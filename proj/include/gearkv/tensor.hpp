#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

namespace gearkv {

/// Row-major (tokens x channels) matrix of 32-bit reals.
///
/// A default-constructed matrix is an unset 0x0 placeholder; every other
/// constructor requires cols >= 1 and finite values.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<float> values() noexcept { return values_; }

  void append_row(std::span<const float> row);

  DenseMatrix transposed() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

/// H heads of width d_H partitioning the channel axis.
struct HeadLayout {
  std::size_t head_count = 1;
  std::size_t head_dim = 1;

  std::size_t channels() const noexcept { return head_count * head_dim; }
  /// Throws a shape error unless head_count >= 1 and channels() == cols.
  void check(std::size_t cols) const;

  friend bool operator==(const HeadLayout&, const HeadLayout&) = default;
};

std::vector<DenseMatrix> split_heads(const DenseMatrix& x, const HeadLayout& layout);
DenseMatrix concat_columns(std::span<const DenseMatrix> parts);
DenseMatrix concat_rows(std::span<const DenseMatrix> parts);
DenseMatrix slice_rows(const DenseMatrix& x, std::size_t begin, std::size_t end);
DenseMatrix add(const DenseMatrix& x, const DenseMatrix& y);
DenseMatrix subtract(const DenseMatrix& x, const DenseMatrix& y);

double frobenius_norm(const DenseMatrix& x);
double frobenius_error(const DenseMatrix& x, const DenseMatrix& y);
double max_abs_error(const DenseMatrix& x, const DenseMatrix& y);

// KVT1 tensor files: "KVT1", u32 rows, u32 cols, u8 dtype (0 = f32),
// 3 pad bytes, then rows*cols little-endian f32 values row-major.
std::vector<std::byte> encode_tensor(const DenseMatrix& x);
DenseMatrix decode_tensor(std::span<const std::byte> bytes);
void save_tensor(const DenseMatrix& x, const std::filesystem::path& path);
DenseMatrix load_tensor(const std::filesystem::path& path);

}  // namespace gearkv
