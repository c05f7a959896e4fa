#include "gearkv/gear.hpp"

#include <cmath>

#include "gearkv/error.hpp"
#include "gearkv/random.hpp"

namespace gearkv {

std::string to_string(Role role) { return role == Role::kKey ? "key" : "value"; }

std::size_t GearConfig::flush_threshold() const {
  validate();
  return buffer_size;
}

void GearConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (!is_supported_bit_width(bit_width) && !passthrough()) {
    fail("bit width must be 2, 4, 8 or 16 (pass-through), got " + std::to_string(bit_width));
  }
  if (!(sparsity_percent >= 0.0 && sparsity_percent <= 100.0)) {
    fail("sparsity percent must lie in [0, 100]");
  }
  if (!(coverage_percent >= 0.0 && coverage_percent <= 100.0)) {
    fail("low-rank coverage percent must lie in [0, 100]");
  }
  if (buffer_size == 0) fail("buffer size must be >= 1");
  if (power_iterations == 0) fail("power iterations must be >= 1");
  key_scheme.validate();
  value_scheme.validate();
  for (const auto* scheme : {&key_scheme, &value_scheme}) {
    if (scheme->kind == GroupingScheme::Kind::kPerChannelGrouped &&
        buffer_size % scheme->group_size != 0) {
      fail("flush threshold violation: buffer size " + std::to_string(buffer_size) +
           " is not a multiple of per-channel group size " + std::to_string(scheme->group_size));
    }
  }
}

DenseMatrix CompressedBlock::backbone_dense() const {
  if (const auto* q = std::get_if<QuantizedTensor>(&backbone)) return dequantize(*q);
  return std::get<DenseMatrix>(backbone);
}

CompressedBlock compress_block(const DenseMatrix& x, const GearConfig& cfg,
                               const HeadLayout& layout, Role role, std::size_t rank,
                               double coverage_percent, std::size_t first_token) {
  cfg.validate();
  layout.check(x.cols());
  if (x.rows() == 0) throw Error(ErrorCode::kShape, "compress_block needs at least one row");
  if (!(coverage_percent >= 0.0 && coverage_percent <= 100.0)) {
    throw Error(ErrorCode::kInvalidConfig, "low-rank coverage percent must lie in [0, 100]");
  }

  CompressedBlock block;
  block.role = role;
  block.tokens = {first_token, first_token + x.rows()};
  block.lowrank.layout = layout;
  block.lowrank.rows = x.rows();
  block.lowrank.row_offset = x.rows();

  if (cfg.passthrough()) {
    block.backbone = x;
    block.outliers = {x.rows(), x.cols(), cfg.outlier_axis_for(role), {}};
    return block;
  }

  auto split = filter_outliers(x, cfg.sparsity_percent, cfg.outlier_axis_for(role));
  auto quantized = quantize(split.remainder, cfg.bit_width, cfg.scheme_for(role));
  block.outliers = std::move(split.outliers);

  const auto covered = static_cast<std::size_t>(
      std::ceil(coverage_percent * static_cast<double>(x.rows()) / 100.0));
  if (rank > 0 && covered > 0) {
    // R = X - dequant(D) - S, restricted to the most recent covered rows.
    DenseMatrix residual = subtract(x, dequantize(quantized));
    for (const auto& e : block.outliers.entries) residual(e.row, e.col) -= e.value;
    const std::size_t offset = x.rows() - covered;
    auto lowrank = solve_heads(slice_rows(residual, offset, x.rows()), layout, rank,
                               cfg.power_iterations,
                               derive_seed({cfg.seed, static_cast<std::uint64_t>(role)}));
    lowrank.rows = x.rows();
    lowrank.row_offset = lowrank.empty() ? x.rows() : offset;
    block.lowrank = std::move(lowrank);
  }
  block.backbone = std::move(quantized);
  return block;
}

DenseMatrix reconstruct_block(const CompressedBlock& block) {
  DenseMatrix out = block.backbone_dense();
  if (out.rows() != block.rows() || block.lowrank.rows != block.rows()) {
    throw Error(ErrorCode::kShape, "block components disagree on row count");
  }
  if (!block.lowrank.empty()) out = add(out, block.lowrank.reconstruct());
  block.outliers.scatter_add(out);
  return out;
}

ErrorMetrics error_report(const DenseMatrix& x, const CompressedBlock& block) {
  const DenseMatrix backbone = block.backbone_dense();
  const DenseMatrix lowrank = block.lowrank.reconstruct();
  const DenseMatrix sparse = block.outliers.to_dense();
  const DenseMatrix approx = reconstruct_block(block);

  ErrorMetrics m;
  m.frobenius = frobenius_error(x, approx);
  const double norm = frobenius_norm(x);
  m.relative = norm > 0.0 ? m.frobenius / norm : 0.0;
  m.max_abs = max_abs_error(x, approx);

  const double eb = std::pow(frobenius_norm(backbone), 2);
  const double el = std::pow(frobenius_norm(lowrank), 2);
  const double es = std::pow(frobenius_norm(sparse), 2);
  const double total = eb + el + es;
  if (total > 0.0) {
    m.backbone_share = eb / total;
    m.lowrank_share = el / total;
    m.outlier_share = es / total;
  }
  return m;
}

}  // namespace gearkv
