// GKV1 cache snapshots.
//
// Layout (little-endian): "GKV1", u32 version, config, head layout,
// u64 total tokens, u64 prefill tokens, key blocks, value blocks, then the
// two staging buffers. Quantized payloads use the packed code layout of
// the quantizer verbatim.

#include <string>

#include "bytes.hpp"
#include "gearkv/error.hpp"
#include "gearkv/kv_cache.hpp"

namespace gearkv {

namespace {

constexpr char kSnapshotMagic[5] = "GKV1";
constexpr std::uint32_t kSnapshotVersion = 1;

using detail::ByteReader;
using detail::ByteWriter;

std::uint32_t narrow(std::size_t v) {
  if (v > 0xffffffffu) throw Error(ErrorCode::kFormat, "dimension overflow in snapshot");
  return static_cast<std::uint32_t>(v);
}

void write_scheme(ByteWriter& w, const GroupingScheme& s) {
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.u32(narrow(s.group_size));
}

GroupingScheme read_scheme(ByteReader& r) {
  const auto kind = r.u8();
  if (kind > 3) throw Error(ErrorCode::kFormat, "unknown grouping kind");
  GroupingScheme s{static_cast<GroupingScheme::Kind>(kind), r.u32()};
  return s;
}

OutlierAxis read_axis(ByteReader& r) {
  const auto axis = r.u8();
  if (axis > 1) throw Error(ErrorCode::kFormat, "unknown outlier axis");
  return static_cast<OutlierAxis>(axis);
}

void write_matrix(ByteWriter& w, const DenseMatrix& m) {
  w.u32(narrow(m.rows()));
  w.u32(narrow(m.cols()));
  w.f32s(m.values());
}

DenseMatrix read_matrix(ByteReader& r) {
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  if (cols == 0) return {};
  return DenseMatrix(rows, cols, r.f32s(rows * cols));
}

void write_block(ByteWriter& w, const CompressedBlock& b) {
  w.u8(static_cast<std::uint8_t>(b.role));
  w.u64(b.tokens.begin);
  w.u64(b.tokens.end);
  if (const auto* q = std::get_if<QuantizedTensor>(&b.backbone)) {
    w.u8(0);
    w.u32(narrow(q->rows));
    w.u32(narrow(q->cols));
    w.u8(static_cast<std::uint8_t>(q->bit_width));
    write_scheme(w, q->scheme);
    w.u32(narrow(q->scales.size()));
    w.f32s(q->scales);
    w.f32s(q->zeros);
    w.u64(q->packed.size());
    w.raw(q->packed);
  } else {
    w.u8(1);
    write_matrix(w, std::get<DenseMatrix>(b.backbone));
  }

  w.u32(narrow(b.outliers.rows));
  w.u32(narrow(b.outliers.cols));
  w.u8(static_cast<std::uint8_t>(b.outliers.axis));
  w.u64(b.outliers.entries.size());
  for (const auto& e : b.outliers.entries) {
    w.u32(e.row);
    w.u32(e.col);
    w.f32(e.value);
  }

  const auto& lr = b.lowrank;
  w.u32(narrow(lr.layout.head_count));
  w.u32(narrow(lr.layout.head_dim));
  w.u32(narrow(lr.rows));
  w.u32(narrow(lr.row_offset));
  w.u32(narrow(lr.rank));
  w.u8(lr.rank_clamped ? 1 : 0);
  w.u32(narrow(lr.heads.size()));
  for (const auto& h : lr.heads) {
    write_matrix(w, h.a);
    write_matrix(w, h.b);
  }
}

CompressedBlock read_block(ByteReader& r) {
  CompressedBlock b;
  const auto role = r.u8();
  if (role > 1) throw Error(ErrorCode::kFormat, "unknown block role");
  b.role = static_cast<Role>(role);
  b.tokens.begin = r.u64();
  b.tokens.end = r.u64();
  if (b.tokens.end < b.tokens.begin) throw Error(ErrorCode::kFormat, "inverted token range");

  const auto backbone_kind = r.u8();
  if (backbone_kind == 0) {
    QuantizedTensor q;
    q.rows = r.u32();
    q.cols = r.u32();
    q.bit_width = r.u8();
    q.scheme = read_scheme(r);
    const std::size_t groups = r.u32();
    q.scales = r.f32s(groups);
    q.zeros = r.f32s(groups);
    const std::uint64_t packed = r.u64();
    if (packed != packed_byte_count(q.entry_count(), q.bit_width)) {
      throw Error(ErrorCode::kFormat, "packed payload length does not match shape");
    }
    q.packed = r.raw(packed);
    b.backbone = std::move(q);
  } else if (backbone_kind == 1) {
    b.backbone = read_matrix(r);
  } else {
    throw Error(ErrorCode::kFormat, "unknown backbone kind");
  }

  b.outliers.rows = r.u32();
  b.outliers.cols = r.u32();
  b.outliers.axis = read_axis(r);
  const std::uint64_t count = r.u64();
  r.need(count * 12);
  b.outliers.entries.resize(count);
  for (auto& e : b.outliers.entries) {
    e.row = r.u32();
    e.col = r.u32();
    e.value = r.f32();
    if (e.row >= b.outliers.rows || e.col >= b.outliers.cols) {
      throw Error(ErrorCode::kFormat, "outlier index out of range");
    }
  }

  auto& lr = b.lowrank;
  lr.layout.head_count = r.u32();
  lr.layout.head_dim = r.u32();
  lr.rows = r.u32();
  lr.row_offset = r.u32();
  lr.rank = r.u32();
  lr.rank_clamped = r.u8() != 0;
  const std::size_t heads = r.u32();
  if (heads != 0 && heads != lr.layout.head_count) {
    throw Error(ErrorCode::kFormat, "factor head count does not match layout");
  }
  for (std::size_t h = 0; h < heads; ++h) {
    HeadFactors f;
    f.a = read_matrix(r);
    f.b = read_matrix(r);
    lr.heads.push_back(std::move(f));
  }
  return b;
}

void write_config(ByteWriter& w, const GearConfig& c) {
  w.u8(static_cast<std::uint8_t>(c.bit_width));
  w.f64(c.sparsity_percent);
  w.u32(narrow(c.rank_prefill));
  w.u32(narrow(c.rank_decode));
  w.u32(narrow(c.buffer_size));
  write_scheme(w, c.key_scheme);
  write_scheme(w, c.value_scheme);
  w.u8(static_cast<std::uint8_t>(c.key_outlier_axis));
  w.u8(static_cast<std::uint8_t>(c.value_outlier_axis));
  w.u32(narrow(c.power_iterations));
  w.u64(c.seed);
  w.f64(c.coverage_percent);
}

GearConfig read_config(ByteReader& r) {
  GearConfig c;
  c.bit_width = r.u8();
  c.sparsity_percent = r.f64();
  c.rank_prefill = r.u32();
  c.rank_decode = r.u32();
  c.buffer_size = r.u32();
  c.key_scheme = read_scheme(r);
  c.value_scheme = read_scheme(r);
  c.key_outlier_axis = read_axis(r);
  c.value_outlier_axis = read_axis(r);
  c.power_iterations = r.u32();
  c.seed = r.u64();
  c.coverage_percent = r.f64();
  c.validate();
  return c;
}

}  // namespace

std::vector<std::byte> KVCache::encode() const {
  ByteWriter w;
  w.tag(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  write_config(w, cfg_);
  w.u32(narrow(layout_.head_count));
  w.u32(narrow(layout_.head_dim));
  w.u64(total_tokens_);
  w.u64(prefill_tokens_);
  for (const auto* blocks : {&key_blocks_, &value_blocks_}) {
    w.u32(narrow(blocks->size()));
    for (const auto& b : *blocks) write_block(w, b);
  }
  write_matrix(w, key_buffer_);
  write_matrix(w, value_buffer_);
  return w.take();
}

KVCache KVCache::decode(std::span<const std::byte> bytes) {
  ByteReader r(bytes, "snapshot");
  if (bytes.size() < 8) throw Error(ErrorCode::kFormat, "truncated header");
  if (!r.tag_matches(kSnapshotMagic)) throw Error(ErrorCode::kFormat, "bad magic");
  const auto version = r.u32();
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::kFormat, "unsupported snapshot version " + std::to_string(version));
  }
  GearConfig cfg = read_config(r);
  HeadLayout layout{r.u32(), r.u32()};
  if (layout.head_count == 0 || layout.head_dim == 0) {
    throw Error(ErrorCode::kFormat, "snapshot has an empty head layout");
  }
  KVCache cache(std::move(cfg), layout);
  cache.total_tokens_ = r.u64();
  cache.prefill_tokens_ = r.u64();
  for (auto* blocks : {&cache.key_blocks_, &cache.value_blocks_}) {
    const std::size_t count = r.u32();
    for (std::size_t i = 0; i < count; ++i) blocks->push_back(read_block(r));
  }
  cache.key_buffer_ = read_matrix(r);
  cache.value_buffer_ = read_matrix(r);
  if (cache.key_buffer_.cols() != layout.channels() ||
      cache.value_buffer_.cols() != layout.channels()) {
    throw Error(ErrorCode::kFormat, "buffer width does not match head layout");
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kFormat, "trailing bytes after snapshot");

  std::size_t tokens = cache.key_buffer_.rows();
  for (const auto& b : cache.key_blocks_) tokens += b.rows();
  if (tokens != cache.total_tokens_) {
    throw Error(ErrorCode::kFormat, "block token ranges do not add up to total tokens");
  }
  return cache;
}

}  // namespace gearkv
