#include "gearkv/kv_cache.hpp"

#include "gearkv/error.hpp"

namespace gearkv {

KVCache::KVCache(GearConfig cfg, HeadLayout layout)
    : cfg_(std::move(cfg)),
      layout_(layout),
      key_buffer_(0, layout.channels()),
      value_buffer_(0, layout.channels()) {}

KVCache KVCache::prefill(const DenseMatrix& keys, const DenseMatrix& values,
                         const GearConfig& cfg, const HeadLayout& layout) {
  cfg.validate();
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw Error(ErrorCode::kShape, "prefill keys and values differ in shape");
  }
  layout.check(keys.cols());

  KVCache cache(cfg, layout);
  const std::size_t n = keys.rows();
  if (n > 0) {
    cache.key_blocks_.push_back(compress_block(keys, cfg, layout, Role::kKey, cfg.rank_prefill,
                                               cfg.coverage_percent, 0));
    cache.value_blocks_.push_back(compress_block(values, cfg, layout, Role::kValue,
                                                 cfg.rank_prefill, cfg.coverage_percent, 0));
  }
  cache.total_tokens_ = n;
  cache.prefill_tokens_ = n;
  return cache;
}

void KVCache::append_token(std::span<const float> key, std::span<const float> value) {
  if (key.size() != channels() || value.size() != channels()) {
    throw Error(ErrorCode::kShape, "append_token expects " + std::to_string(channels()) +
                                       " channels per vector");
  }
  key_buffer_.append_row(key);
  value_buffer_.append_row(value);
  ++total_tokens_;
  if (key_buffer_.rows() >= cfg_.buffer_size) flush();
}

void KVCache::flush() {
  const std::size_t first = total_tokens_ - key_buffer_.rows();
  key_blocks_.push_back(
      compress_block(key_buffer_, cfg_, layout_, Role::kKey, cfg_.rank_decode, 100.0, first));
  value_blocks_.push_back(
      compress_block(value_buffer_, cfg_, layout_, Role::kValue, cfg_.rank_decode, 100.0, first));
  key_buffer_ = DenseMatrix(0, channels());
  value_buffer_ = DenseMatrix(0, channels());
}

std::pair<DenseMatrix, DenseMatrix> KVCache::materialize() const {
  std::vector<DenseMatrix> keys;
  std::vector<DenseMatrix> values;
  keys.reserve(key_blocks_.size() + 1);
  values.reserve(value_blocks_.size() + 1);
  for (const auto& b : key_blocks_) keys.push_back(reconstruct_block(b));
  for (const auto& b : value_blocks_) values.push_back(reconstruct_block(b));
  keys.push_back(key_buffer_);
  values.push_back(value_buffer_);
  return {concat_rows(keys), concat_rows(values)};
}

}  // namespace gearkv
