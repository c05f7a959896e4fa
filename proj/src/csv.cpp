#include "gearkv/csv.hpp"

#include <fmt/format.h>

namespace gearkv::csv {

std::string number(double v) {
  if (v == 0.0) return "0";  // folds -0 into 0
  return fmt::format("{:.9g}", v);
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

void write_deviation(std::ostream& out, const std::vector<DeviationTrace>& traces) {
  out << kDeviationHeader << '\n';
  for (const auto& trace : traces) {
    for (const auto& r : trace.records) {
      write_row(out, {std::to_string(r.step), number(r.l2_deviation), number(r.cosine),
                      trace.config_id});
    }
  }
}

void write_memory_table(std::ostream& out, const MemoryReport& r) {
  auto line = [&](std::string_view label, double bytes) {
    const double share = r.fp16_bytes > 0.0 ? 100.0 * bytes / r.fp16_bytes : 0.0;
    out << fmt::format("{:<22}{:>16.0f} B {:>9.3f} %\n", label, bytes, share);
  };
  line("packed codes", r.code_bytes);
  line("scales + zeros", r.scale_zero_bytes);
  line("sparse values", r.sparse_value_bytes);
  line("sparse indices", r.sparse_index_bytes);
  line("low-rank factors", r.lowrank_bytes);
  line("streaming buffer", r.buffer_bytes);
  line("total", r.total_bytes);
  line("fp16 baseline", r.fp16_bytes);
}

}  // namespace gearkv::csv
