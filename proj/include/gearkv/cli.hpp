#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gearkv/attention.hpp"
#include "gearkv/gear.hpp"

namespace gearkv::cli {

/// Every knob the commands understand. Unset fields fall through to the
/// next layer: flags over config file over preset over built-in defaults.
struct Settings {
  std::optional<int> bits;
  std::optional<double> sparsity;
  std::optional<std::size_t> rank_prefill;
  std::optional<std::size_t> rank_decode;
  std::optional<std::size_t> buffer;
  std::optional<std::string> backbone;
  std::optional<double> coverage;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;

  std::optional<std::size_t> n;
  std::optional<std::size_t> d;
  std::optional<std::size_t> heads;
  std::optional<std::size_t> outlier_channels;
  std::optional<double> outlier_scale;
  std::optional<double> rho;
  std::optional<std::size_t> steps;

  std::optional<std::size_t> n_prefill;
  std::optional<std::size_t> n_gen;
  std::optional<std::size_t> index_bits;
  std::optional<std::string> buffer_convention;
  std::optional<std::string> format;
  std::optional<std::string> role;
  std::optional<std::vector<std::string>> configs;

  // Sweep axes.
  std::optional<std::vector<int>> bits_list;
  std::optional<std::vector<double>> sparsity_list;
  std::optional<std::vector<std::size_t>> rank_list;
  std::optional<std::vector<double>> coverage_list;
  std::optional<std::vector<std::size_t>> buffer_list;

  /// Copies every field that is set in `top` over this one.
  void overlay(const Settings& top);
};

/// Built-in operating points. Names ending in "-gsm8k" additionally pin
/// the accounting dimensions to a 900-token prompt, 256 generated tokens,
/// 1024 channels and 8 heads.
std::optional<Settings> find_preset(std::string_view name);
std::vector<std::string> preset_names();

/// Key/value grouping for a backbone name: "kcvt", "per-token-g<g>",
/// "kivi-g<g>".
std::pair<GroupingScheme, GroupingScheme> backbone_schemes(std::string_view name);

GearConfig make_gear_config(const Settings& s);
SyntheticKVSpec make_synthetic_spec(const Settings& s);

/// Entry point behind the gearkv executable. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gearkv::cli
