#include "gearkv/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gearkv/error.hpp"

namespace gearkv {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Contiguous run of the code stream belonging to one group.
struct GroupSpan {
  std::size_t begin;
  std::size_t length;
};

// Streams are row-major for per-token schemes and column-major for
// per-channel ones; `axis` is the length of one vector along the stream.
class GroupWalker {
 public:
  GroupWalker(const GroupingScheme& scheme, std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), per_channel_(scheme.per_channel()) {
    axis_ = per_channel_ ? rows : cols;
    vectors_ = per_channel_ ? cols : rows;
    span_ = std::max<std::size_t>(1, scheme.span_along(axis_));
    per_vector_ = axis_ == 0 ? 0 : ceil_div(axis_, span_);
  }

  std::size_t group_count() const noexcept { return per_vector_ * vectors_; }

  GroupSpan group(std::size_t k) const {
    const std::size_t vec = k / per_vector_;
    const std::size_t j = k % per_vector_;
    const std::size_t offset = j * span_;
    return {vec * axis_ + offset, std::min(span_, axis_ - offset)};
  }

  // Stream position -> row-major value index.
  std::size_t value_index(std::size_t stream) const noexcept {
    if (!per_channel_) return stream;
    const std::size_t c = stream / rows_;
    const std::size_t r = stream % rows_;
    return r * cols_ + c;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  bool per_channel_;
  std::size_t axis_ = 0;
  std::size_t vectors_ = 0;
  std::size_t span_ = 1;
  std::size_t per_vector_ = 0;
};

void check_bits(int bits) {
  if (!is_supported_bit_width(bits)) {
    throw Error(ErrorCode::kInvalidConfig,
                "unsupported bit width " + std::to_string(bits) + " (expected 2, 4 or 8)");
  }
}

}  // namespace

std::size_t GroupingScheme::group_count(std::size_t rows, std::size_t cols) const {
  validate();
  if (rows == 0 || cols == 0) return 0;
  return GroupWalker(*this, rows, cols).group_count();
}

void GroupingScheme::validate() const {
  if (grouped() && group_size == 0) {
    throw Error(ErrorCode::kInvalidConfig, "group size must be >= 1");
  }
}

std::string GroupingScheme::name() const {
  switch (kind) {
    case Kind::kPerTokenGrouped: return "per-token-g" + std::to_string(group_size);
    case Kind::kPerChannelGrouped: return "per-channel-g" + std::to_string(group_size);
    case Kind::kPerTokenVector: return "per-token";
    case Kind::kPerChannelVector: return "per-channel";
  }
  return "unknown";
}

bool is_supported_bit_width(int bits) noexcept { return bits == 2 || bits == 4 || bits == 8; }

std::size_t packed_byte_count(std::size_t count, int bits) {
  check_bits(bits);
  const std::size_t per_byte = 8 / static_cast<std::size_t>(bits);
  return ceil_div(count, per_byte);
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, int bits) {
  check_bits(bits);
  const std::size_t per_byte = 8 / static_cast<std::size_t>(bits);
  const unsigned limit = (1u << bits) - 1u;
  std::vector<std::uint8_t> packed(packed_byte_count(codes.size(), bits), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > limit) throw Error(ErrorCode::kFormat, "code exceeds bit width");
    const unsigned shift = static_cast<unsigned>((i % per_byte) * bits);
    packed[i / per_byte] |= static_cast<std::uint8_t>(codes[i] << shift);
  }
  return packed;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, int bits,
                                       std::size_t count) {
  check_bits(bits);
  if (packed.size() != packed_byte_count(count, bits)) {
    throw Error(ErrorCode::kFormat, "packed payload has " + std::to_string(packed.size()) +
                                        " bytes, expected " +
                                        std::to_string(packed_byte_count(count, bits)));
  }
  const std::size_t per_byte = 8 / static_cast<std::size_t>(bits);
  const unsigned mask = (1u << bits) - 1u;
  std::vector<std::uint8_t> codes(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned shift = static_cast<unsigned>((i % per_byte) * bits);
    codes[i] = static_cast<std::uint8_t>((packed[i / per_byte] >> shift) & mask);
  }
  return codes;
}

std::vector<std::uint8_t> QuantizedTensor::codes() const {
  return unpack_codes(packed, bit_width, entry_count());
}

QuantizedTensor quantize(const DenseMatrix& x, int bits, const GroupingScheme& scheme) {
  check_bits(bits);
  scheme.validate();

  QuantizedTensor q;
  q.rows = x.rows();
  q.cols = x.cols();
  q.bit_width = bits;
  q.scheme = scheme;

  const std::size_t count = x.size();
  if (count == 0) return q;

  const GroupWalker walker(scheme, x.rows(), x.cols());
  const std::size_t groups = walker.group_count();
  const auto levels = static_cast<float>((1u << bits) - 1u);
  const double max_code = levels;
  auto values = x.values();

  std::vector<std::uint8_t> codes(count, 0);
  q.scales.resize(groups);
  q.zeros.resize(groups);

  for (std::size_t k = 0; k < groups; ++k) {
    const GroupSpan g = walker.group(k);
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t s = g.begin; s < g.begin + g.length; ++s) {
      const float v = values[walker.value_index(s)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const float delta = (hi - lo) / levels;
    q.zeros[k] = lo;
    q.scales[k] = delta;
    if (delta == 0.0f) continue;  // constant group: codes stay 0
    for (std::size_t s = g.begin; s < g.begin + g.length; ++s) {
      const double v = values[walker.value_index(s)];
      // nearbyint under the default rounding mode is round-half-to-even.
      const double code = std::nearbyint((v - lo) / static_cast<double>(delta));
      codes[s] = static_cast<std::uint8_t>(std::clamp(code, 0.0, max_code));
    }
  }
  q.packed = pack_codes(codes, bits);
  return q;
}

DenseMatrix dequantize(const QuantizedTensor& q) {
  check_bits(q.bit_width);
  if (q.cols == 0) throw Error(ErrorCode::kFormat, "quantized tensor has no columns");
  const auto codes = q.codes();
  DenseMatrix out(q.rows, q.cols);
  if (q.entry_count() == 0) return out;

  const GroupWalker walker(q.scheme, q.rows, q.cols);
  const std::size_t groups = walker.group_count();
  if (q.scales.size() != groups || q.zeros.size() != groups) {
    throw Error(ErrorCode::kFormat, "scale/zero count does not match grouping");
  }
  auto values = out.values();
  for (std::size_t k = 0; k < groups; ++k) {
    const GroupSpan g = walker.group(k);
    const double zero = q.zeros[k];
    const double delta = q.scales[k];
    for (std::size_t s = g.begin; s < g.begin + g.length; ++s) {
      values[walker.value_index(s)] = static_cast<float>(zero + codes[s] * delta);
    }
  }
  return out;
}

}  // namespace gearkv
