#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gearkv/error.hpp"
#include "gearkv/tensor.hpp"

using namespace gearkv;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-3.0f, 3.0f);
  DenseMatrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no gearkv::Error thrown";
  return ErrorCode::kIo;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gearkv_tensor_test_" + name);
}

}  // namespace

TEST(DenseMatrix, RejectsBadShapesAndNonFinite) {
  EXPECT_EQ(code_of([] { DenseMatrix(2, 0); }), ErrorCode::kShape);
  EXPECT_EQ(code_of([] { DenseMatrix(2, 2, {1, 2, 3}); }), ErrorCode::kShape);
  EXPECT_EQ(code_of([] { DenseMatrix(1, 2, {1, std::numeric_limits<float>::quiet_NaN()}); }),
            ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([] { DenseMatrix(1, 1, {std::numeric_limits<float>::infinity()}); }),
            ErrorCode::kNonFinite);
}

TEST(DenseMatrix, AppendRowAndTranspose) {
  DenseMatrix m(0, 3);
  const float r0[] = {1, 2, 3};
  const float r1[] = {4, 5, 6};
  m.append_row(r0);
  m.append_row(r1);
  EXPECT_EQ(m, DenseMatrix::from_rows({{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(m.transposed(), DenseMatrix::from_rows({{1, 4}, {2, 5}, {3, 6}}));
  const float bad[] = {1, 2};
  EXPECT_EQ(code_of([&] { m.append_row(bad); }), ErrorCode::kShape);
}

TEST(SplitHeads, FourByEightTwoHeadsConcatIsIdentity) {
  const auto x = random_matrix(4, 8, 1);
  const auto parts = split_heads(x, {2, 4});
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].rows(), 4u);
  EXPECT_EQ(parts[0].cols(), 4u);
  EXPECT_EQ(concat_columns(parts), x);
}

TEST(SplitHeads, SingleHeadIsUnchanged) {
  const auto x = random_matrix(4, 8, 2);
  const auto parts = split_heads(x, {1, 8});
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0], x);
}

TEST(SplitHeads, ThreeBySixMatchesIndexOracle) {
  const auto x = random_matrix(3, 6, 3);
  const auto parts = split_heads(x, {2, 3});
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(parts[h](r, c), x(r, h * 3 + c));
}

TEST(SplitHeads, ConcatIdentityForEveryDivisor) {
  const auto x = random_matrix(5, 24, 4);
  for (std::size_t h = 1; h <= 24; ++h) {
    if (24 % h != 0) continue;
    EXPECT_EQ(concat_columns(split_heads(x, {h, 24 / h})), x) << "H=" << h;
  }
}

TEST(SplitHeads, RejectsNonDividingLayout) {
  const auto x = random_matrix(2, 6, 5);
  EXPECT_EQ(code_of([&] { split_heads(x, {4, 1}); }), ErrorCode::kShape);
  EXPECT_EQ(code_of([&] { split_heads(x, {0, 6}); }), ErrorCode::kShape);
}

TEST(RowOps, SliceAndConcatRows) {
  const auto x = random_matrix(7, 3, 6);
  const DenseMatrix parts[] = {slice_rows(x, 0, 2), slice_rows(x, 2, 2), slice_rows(x, 2, 7)};
  EXPECT_EQ(parts[1].rows(), 0u);
  EXPECT_EQ(concat_rows(parts), x);
  EXPECT_EQ(code_of([&] { slice_rows(x, 3, 8); }), ErrorCode::kShape);
}

TEST(Frobenius, Examples) {
  const auto x = random_matrix(3, 3, 7);
  EXPECT_EQ(frobenius_error(x, x), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_error(DenseMatrix::from_rows({{3, 4}}), DenseMatrix(1, 2)), 5.0);
  EXPECT_EQ(code_of([&] { frobenius_error(x, DenseMatrix(3, 2)); }), ErrorCode::kShape);
}

TEST(Frobenius, MatchesSumOfSquaresOracle) {
  const auto x = random_matrix(16, 16, 8);
  const auto y = random_matrix(16, 16, 9);
  long double acc = 0;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      const long double d = static_cast<long double>(x(r, c)) - y(r, c);
      acc += d * d;
    }
  const double oracle = std::sqrt(static_cast<double>(acc));
  EXPECT_NEAR(frobenius_error(x, y), oracle, 1e-6 * oracle);
}

TEST(Frobenius, TriangleInequalityOnRandomTriples) {
  for (std::uint32_t seed = 0; seed < 50; ++seed) {
    const auto x = random_matrix(9, 5, 3 * seed + 100);
    const auto y = random_matrix(9, 5, 3 * seed + 101);
    const auto z = random_matrix(9, 5, 3 * seed + 102);
    const double lhs = frobenius_error(x, z);
    const double rhs = frobenius_error(x, y) + frobenius_error(y, z);
    EXPECT_LE(lhs, rhs * (1 + 1e-6));
  }
}

TEST(Kvt1, HandAssembledTwoByThree) {
  const float vals[] = {1.5f, -2.0f, 0.25f, 0.0f, 3.0e10f, -0.0f};
  std::vector<std::byte> bytes;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    bytes.insert(bytes.end(), b, b + n);
  };
  put("KVT1", 4);
  const std::uint8_t header[] = {2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0};
  put(header, sizeof header);
  for (float v : vals) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const std::uint8_t le[] = {static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                               static_cast<std::uint8_t>(bits >> 16),
                               static_cast<std::uint8_t>(bits >> 24)};
    put(le, 4);
  }
  const auto m = decode_tensor(bytes);
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 3u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(m.values()[i]), std::bit_cast<std::uint32_t>(vals[i]));
  }
  EXPECT_EQ(encode_tensor(m), bytes);
}

TEST(Kvt1, EmptyFileIsTruncatedHeader) {
  const auto path = temp_file("empty.kvt");
  { std::ofstream(path, std::ios::binary | std::ios::trunc); }
  try {
    load_tensor(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("truncated header"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Kvt1, RejectsCorruptFiles) {
  const auto good = encode_tensor(random_matrix(2, 2, 10));
  auto bad_magic = good;
  bad_magic[0] = std::byte{'X'};
  EXPECT_EQ(code_of([&] { decode_tensor(bad_magic); }), ErrorCode::kFormat);
  auto bad_dtype = good;
  bad_dtype[12] = std::byte{1};
  EXPECT_EQ(code_of([&] { decode_tensor(bad_dtype); }), ErrorCode::kFormat);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(code_of([&] { decode_tensor(truncated); }), ErrorCode::kFormat);
  auto trailing = good;
  trailing.push_back(std::byte{0});
  EXPECT_EQ(code_of([&] { decode_tensor(trailing); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([] { load_tensor("/nonexistent/dir/x.kvt"); }), ErrorCode::kIo);
}

TEST(Kvt1, FileRoundtripIsBitExactIncludingSignedZeros) {
  std::mt19937 rng(11);
  DenseMatrix m(13, 7);
  for (auto& v : m.values()) {
    // Random finite bit patterns: reject NaN/Inf exponents.
    std::uint32_t bits;
    do {
      bits = static_cast<std::uint32_t>(rng());
    } while (((bits >> 23) & 0xff) == 0xff);
    v = std::bit_cast<float>(bits);
  }
  m(0, 0) = -0.0f;
  m(0, 1) = 0.0f;
  m(0, 2) = std::numeric_limits<float>::denorm_min();
  const auto path = temp_file("roundtrip.kvt");
  save_tensor(m, path);
  const auto back = load_tensor(path);
  ASSERT_EQ(back.rows(), m.rows());
  ASSERT_EQ(back.cols(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.values()[i]),
              std::bit_cast<std::uint32_t>(m.values()[i]));
  }
  std::filesystem::remove(path);
}

TEST(Kvt1, ZeroRowMatrixRoundtrips) {
  const DenseMatrix m(0, 4);
  const auto back = decode_tensor(encode_tensor(m));
  EXPECT_EQ(back.rows(), 0u);
  EXPECT_EQ(back.cols(), 4u);
}
