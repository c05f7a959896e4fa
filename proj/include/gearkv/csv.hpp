#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gearkv/accounting.hpp"
#include "gearkv/attention.hpp"
#include "gearkv/gear.hpp"

namespace gearkv::csv {

// Column sets are part of the CLI contract; bump the version suffix in
// docs/csv-schemas.md whenever one changes.
inline constexpr std::string_view kCompressHeader =
    "tensor,role,rows,cols,bits,scheme,sparsity,rank,coverage,frobenius,relative,max_abs,"
    "backbone_share,lowrank_share,outlier_share";
inline constexpr std::string_view kSweepHeader =
    "bits,sparsity,rank,coverage,buffer,rel_err_key,rel_err_value,rel_err,kv_size_percent";
inline constexpr std::string_view kDeviationHeader = "step,l2_dev,cosine,cfg_id";
inline constexpr std::string_view kAccountHeader =
    "preset,bits,sparsity,rank_prefill,rank_decode,buffer,n_prefill,n_gen,channels,heads,"
    "code_bytes,scale_zero_bytes,sparse_value_bytes,sparse_index_bytes,lowrank_bytes,"
    "buffer_bytes,total_bytes,fp16_bytes,percent_of_fp16";
inline constexpr std::string_view kErrorDominanceHeader =
    "seed,rel_err_backbone,rel_err_gear_l,rel_err_gear,ratio_gear_l,ratio_gear";

/// Fixed 9-significant-digit rendering used for every real-valued cell.
std::string number(double v);

/// Joins already-rendered cells with commas and terminates the line.
void write_row(std::ostream& out, const std::vector<std::string>& cells);

void write_deviation(std::ostream& out, const std::vector<DeviationTrace>& traces);
void write_memory_table(std::ostream& out, const MemoryReport& report);

}  // namespace gearkv::csv
