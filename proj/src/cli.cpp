#include "gearkv/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <tuple>

#include "CLI11.hpp"
#include "gearkv/accounting.hpp"
#include "gearkv/csv.hpp"
#include "gearkv/error.hpp"
#include "gearkv/kv_cache.hpp"
#include "json.hpp"

namespace gearkv::cli {

namespace fs = std::filesystem;

void Settings::overlay(const Settings& top) {
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  take(bits, top.bits);
  take(sparsity, top.sparsity);
  take(rank_prefill, top.rank_prefill);
  take(rank_decode, top.rank_decode);
  take(buffer, top.buffer);
  take(backbone, top.backbone);
  take(coverage, top.coverage);
  take(seed, top.seed);
  take(iters, top.iters);
  take(n, top.n);
  take(d, top.d);
  take(heads, top.heads);
  take(outlier_channels, top.outlier_channels);
  take(outlier_scale, top.outlier_scale);
  take(rho, top.rho);
  take(steps, top.steps);
  take(n_prefill, top.n_prefill);
  take(n_gen, top.n_gen);
  take(index_bits, top.index_bits);
  take(buffer_convention, top.buffer_convention);
  take(format, top.format);
  take(role, top.role);
  take(configs, top.configs);
  take(bits_list, top.bits_list);
  take(sparsity_list, top.sparsity_list);
  take(rank_list, top.rank_list);
  take(coverage_list, top.coverage_list);
  take(buffer_list, top.buffer_list);
}

namespace {

Settings builtin_defaults() {
  Settings s;
  s.bits = 4;
  s.sparsity = 2.0;
  s.rank_prefill = 4;
  s.rank_decode = 2;
  s.buffer = 20;
  s.backbone = "kcvt";
  s.coverage = 100.0;
  s.iters = 2;
  s.n = 256;
  s.d = 128;
  s.heads = 2;
  s.outlier_channels = 4;
  s.outlier_scale = 16.0;
  s.rho = 0.9;
  s.n_prefill = 900;
  s.n_gen = 256;
  s.index_bits = 16;
  s.buffer_convention = "full";
  s.format = "csv";
  return s;
}

Settings operating_point(int bits, std::string backbone, double sparsity, std::size_t rank_prefill,
                         std::size_t rank_decode, std::size_t buffer) {
  Settings s;
  s.bits = bits;
  s.backbone = std::move(backbone);
  s.sparsity = sparsity;
  s.rank_prefill = rank_prefill;
  s.rank_decode = rank_decode;
  s.buffer = buffer;
  return s;
}

const std::vector<std::pair<std::string, Settings>>& base_presets() {
  static const std::vector<std::pair<std::string, Settings>> presets = {
      {"fp16", operating_point(kPassthroughBits, "kcvt", 0.0, 0, 0, 1)},
      {"pertoken4", operating_point(4, "per-token-g64", 0.0, 0, 0, 64)},
      {"pertoken2", operating_point(2, "per-token-g64", 0.0, 0, 0, 64)},
      {"kcvt4", operating_point(4, "kcvt", 0.0, 0, 0, 20)},
      {"kivi4", operating_point(4, "kivi-g64", 0.0, 0, 0, 64)},
      {"kivi2", operating_point(2, "kivi-g64", 0.0, 0, 0, 64)},
      {"gearl4", operating_point(4, "kcvt", 0.0, 4, 2, 20)},
      {"gear4", operating_point(4, "kcvt", 2.0, 4, 2, 20)},
      {"gearl2", operating_point(2, "kivi-g64", 0.0, 4, 2, 64)},
      {"gear2", operating_point(2, "kivi-g64", 2.0, 4, 2, 64)},
  };
  return presets;
}

constexpr std::string_view kGsm8kSuffix = "-gsm8k";

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); }

std::size_t parse_group_suffix(std::string_view name, std::string_view prefix) {
  const auto digits = name.substr(prefix.size());
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    invalid("unknown backbone '" + std::string(name) + "'");
  }
  const auto g = static_cast<std::size_t>(std::stoul(std::string(digits)));
  if (g == 0) invalid("backbone group size must be >= 1");
  return g;
}

template <class T>
void read_json(const nlohmann::json& v, std::optional<T>& dst, const std::string& key) {
  try {
    dst = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid("config key '" + key + "' has the wrong type");
  }
}

template <class T, class L>
void read_json_axis(const nlohmann::json& v, std::optional<T>& scalar, std::optional<L>& list,
                    const std::string& key) {
  if (v.is_array()) {
    read_json(v, list, key);
  } else {
    read_json(v, scalar, key);
  }
}

Settings settings_from_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    invalid("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) invalid("config file must hold a JSON object");

  Settings s;
  for (const auto& [key, v] : j.items()) {
    if (key == "bits") read_json_axis(v, s.bits, s.bits_list, key);
    else if (key == "sparsity") read_json_axis(v, s.sparsity, s.sparsity_list, key);
    else if (key == "rank") read_json(v, s.rank_list, key);
    else if (key == "rank-prefill") read_json(v, s.rank_prefill, key);
    else if (key == "rank-decode") read_json(v, s.rank_decode, key);
    else if (key == "buffer") read_json_axis(v, s.buffer, s.buffer_list, key);
    else if (key == "backbone") read_json(v, s.backbone, key);
    else if (key == "coverage-p") read_json_axis(v, s.coverage, s.coverage_list, key);
    else if (key == "seed") read_json(v, s.seed, key);
    else if (key == "iters") read_json(v, s.iters, key);
    else if (key == "n") read_json(v, s.n, key);
    else if (key == "d") read_json(v, s.d, key);
    else if (key == "heads") read_json(v, s.heads, key);
    else if (key == "outlier-channels") read_json(v, s.outlier_channels, key);
    else if (key == "outlier-scale") read_json(v, s.outlier_scale, key);
    else if (key == "rho") read_json(v, s.rho, key);
    else if (key == "steps") read_json(v, s.steps, key);
    else if (key == "n-prefill") read_json(v, s.n_prefill, key);
    else if (key == "n-gen") read_json(v, s.n_gen, key);
    else if (key == "index-bits") read_json(v, s.index_bits, key);
    else if (key == "buffer-convention") read_json(v, s.buffer_convention, key);
    else if (key == "format") read_json(v, s.format, key);
    else if (key == "role") read_json(v, s.role, key);
    else if (key == "configs") read_json(v, s.configs, key);
    else invalid("unknown config key '" + key + "'");
  }
  if (s.rank_list && s.rank_list->size() == 1) s.rank_prefill = s.rank_list->front();
  return s;
}

// Registers CLI11 options whose values are copied into a Settings only
// when the flag actually appeared on the command line.
class FlagBinder {
 public:
  explicit FlagBinder(CLI::App& app) : app_(app) {}

  template <class T>
  CLI::Option* bind(const std::string& flag, std::optional<T> Settings::*field,
                    const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app_.add_option(flag, *holder, help);
    appliers_.push_back([opt, holder, field](Settings& s) {
      if (opt->count() > 0) s.*field = *holder;
    });
    return opt;
  }

  Settings collect() const {
    Settings s;
    for (const auto& apply : appliers_) apply(s);
    return s;
  }

 private:
  CLI::App& app_;
  std::vector<std::function<void(Settings&)>> appliers_;
};

struct CommandContext {
  std::string preset;
  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::unique_ptr<FlagBinder> flags;
};

void add_gear_flags(FlagBinder& f, bool sweep) {
  if (sweep) {
    f.bind("--bits", &Settings::bits_list, "bit widths to sweep (2,4,8; 16 = pass-through)")
        ->delimiter(',');
    f.bind("--sparsity", &Settings::sparsity_list, "outlier percents to sweep")->delimiter(',');
    f.bind("--rank", &Settings::rank_list, "ranks to sweep (prefill and decode)")->delimiter(',');
    f.bind("--coverage-p", &Settings::coverage_list, "low-rank coverage percents to sweep")
        ->delimiter(',');
    f.bind("--buffer", &Settings::buffer_list, "buffer sizes to sweep")->delimiter(',');
  } else {
    f.bind("--bits", &Settings::bits, "backbone bit width (2, 4, 8; 16 = pass-through)");
    f.bind("--sparsity", &Settings::sparsity, "outlier percent s");
    f.bind("--coverage-p", &Settings::coverage, "percent of recent prefill rows given low-rank");
    f.bind("--buffer", &Settings::buffer, "streaming buffer size n_b");
  }
  f.bind("--rank-prefill", &Settings::rank_prefill, "low-rank rank for prefill blocks");
  f.bind("--rank-decode", &Settings::rank_decode, "low-rank rank for decode blocks");
  f.bind("--backbone", &Settings::backbone, "per-token-g64 | kcvt | kivi-g64");
  f.bind("--seed", &Settings::seed, "seed (falls back to GEARKV_SEED)");
  f.bind("--iters", &Settings::iters, "power iterations");
}

void add_synthetic_flags(FlagBinder& f) {
  f.bind("--n", &Settings::n, "tokens");
  f.bind("--d", &Settings::d, "channels");
  f.bind("--heads", &Settings::heads, "attention heads");
  f.bind("--outlier-channels", &Settings::outlier_channels, "number of Key outlier channels");
  f.bind("--outlier-scale", &Settings::outlier_scale, "outlier channel magnitude multiplier");
  f.bind("--rho", &Settings::rho, "AR(1) token correlation");
}

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      CommandContext& ctx) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--preset", ctx.preset, "built-in operating point");
  sub->add_option("--config", ctx.config_path, "JSON config file");
  sub->add_option("--out", ctx.out_path, "output path");
  ctx.flags = std::make_unique<FlagBinder>(*sub);
  return sub;
}

Settings resolve(const CommandContext& ctx, Settings defaults) {
  Settings s = std::move(defaults);
  if (!ctx.preset.empty()) {
    auto preset = find_preset(ctx.preset);
    if (!preset) invalid("unknown preset '" + ctx.preset + "'");
    s.overlay(*preset);
  }
  if (!ctx.config_path.empty()) s.overlay(settings_from_config(ctx.config_path));
  s.overlay(ctx.flags->collect());
  if (!s.seed) {
    if (const char* env = std::getenv("GEARKV_SEED"); env && *env) {
      try {
        s.seed = std::stoull(env);
      } catch (const std::exception&) {
        invalid("GEARKV_SEED is not an unsigned integer");
      }
    } else {
      s.seed = 0;
    }
  }
  return s;
}

// Writes to --out when given, else to the command's stdout stream.
template <class Fn>
void emit(const CommandContext& ctx, std::ostream& out, Fn&& write) {
  if (ctx.out_path.empty()) {
    write(out);
    return;
  }
  std::ofstream file(ctx.out_path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIo, "cannot open " + ctx.out_path + " for writing");
  write(file);
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + ctx.out_path);
}

HeadLayout layout_for(std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    invalid(std::to_string(heads) + " heads do not divide " + std::to_string(channels) +
            " channels");
  }
  return {heads, channels / heads};
}

struct KVPair {
  DenseMatrix keys;
  DenseMatrix values;
};

KVPair load_or_generate(const std::string& in_path, const Settings& s) {
  if (!in_path.empty()) {
    const fs::path dir(in_path);
    KVPair kv{load_tensor(dir / "keys.kvt"), load_tensor(dir / "values.kvt")};
    return kv;
  }
  auto synthetic = generate_synthetic_kv(make_synthetic_spec(s));
  return {std::move(synthetic.keys), std::move(synthetic.values)};
}

void run_gen(const CommandContext& ctx, const Settings& s) {
  if (ctx.out_path.empty()) invalid("gen needs --out <directory>");
  const auto kv = generate_synthetic_kv(make_synthetic_spec(s));
  const fs::path dir(ctx.out_path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  save_tensor(kv.keys, dir / "keys.kvt");
  save_tensor(kv.values, dir / "values.kvt");
  save_tensor(kv.queries, dir / "queries.kvt");
}

void run_compress(const CommandContext& ctx, const Settings& s, std::ostream& out) {
  const GearConfig cfg = make_gear_config(s);
  struct Input {
    std::string name;
    Role role;
    DenseMatrix x;
  };
  std::vector<Input> inputs;
  const fs::path in(ctx.in_path);
  if (ctx.in_path.empty()) {
    auto kv = load_or_generate("", s);
    inputs.push_back({"synthetic-keys", Role::kKey, std::move(kv.keys)});
    inputs.push_back({"synthetic-values", Role::kValue, std::move(kv.values)});
  } else if (fs::is_directory(in)) {
    inputs.push_back({"keys.kvt", Role::kKey, load_tensor(in / "keys.kvt")});
    inputs.push_back({"values.kvt", Role::kValue, load_tensor(in / "values.kvt")});
  } else {
    const std::string role = s.role.value_or("key");
    if (role != "key" && role != "value") invalid("--role must be key or value");
    inputs.push_back({in.filename().string(), role == "key" ? Role::kKey : Role::kValue,
                      load_tensor(in)});
  }

  emit(ctx, out, [&](std::ostream& o) {
    o << csv::kCompressHeader << '\n';
    for (const auto& input : inputs) {
      const HeadLayout layout = layout_for(input.x.cols(), *s.heads);
      const auto block = compress_block(input.x, cfg, layout, input.role, cfg.rank_prefill,
                                        cfg.coverage_percent);
      const auto m = error_report(input.x, block);
      csv::write_row(o, {input.name, to_string(input.role), std::to_string(input.x.rows()),
                         std::to_string(input.x.cols()), std::to_string(cfg.bit_width),
                         cfg.scheme_for(input.role).name(), csv::number(cfg.sparsity_percent),
                         std::to_string(cfg.rank_prefill), csv::number(cfg.coverage_percent),
                         csv::number(m.frobenius), csv::number(m.relative),
                         csv::number(m.max_abs), csv::number(m.backbone_share),
                         csv::number(m.lowrank_share), csv::number(m.outlier_share)});
    }
  });
}

void run_sweep(const CommandContext& ctx, const Settings& s, std::ostream& out) {
  const auto bits = s.bits_list.value_or(std::vector<int>{*s.bits});
  const auto sparsity = s.sparsity_list.value_or(std::vector<double>{*s.sparsity});
  const auto ranks = s.rank_list.value_or(std::vector<std::size_t>{*s.rank_prefill});
  const auto coverage = s.coverage_list.value_or(std::vector<double>{*s.coverage});
  const auto buffers = s.buffer_list.value_or(std::vector<std::size_t>{*s.buffer});
  if (bits.empty() || sparsity.empty() || ranks.empty() || coverage.empty() || buffers.empty()) {
    invalid("sweep axes must be non-empty");
  }

  const KVPair kv = load_or_generate(ctx.in_path, s);
  const HeadLayout layout = layout_for(kv.keys.cols(), *s.heads);
  const std::size_t steps = s.steps.value_or(0);
  if (steps > kv.keys.rows()) invalid("sweep --steps exceeds available tokens");
  const std::size_t n0 = kv.keys.rows() - steps;
  const DenseMatrix prefill_keys = slice_rows(kv.keys, 0, n0);
  const DenseMatrix prefill_values = slice_rows(kv.values, 0, n0);
  const double key_norm = frobenius_norm(kv.keys);
  const double value_norm = frobenius_norm(kv.values);

  using CellKey = std::tuple<int, double, std::size_t, double, std::size_t>;
  std::vector<std::pair<CellKey, std::vector<std::string>>> rows;
  for (int b : bits)
    for (double sp : sparsity)
      for (std::size_t r : ranks)
        for (double p : coverage)
          for (std::size_t nb : buffers) {
            Settings cell = s;
            cell.bits = b;
            cell.sparsity = sp;
            cell.rank_prefill = r;
            cell.rank_decode = r;
            cell.coverage = p;
            cell.buffer = nb;
            const GearConfig cfg = make_gear_config(cell);
            KVCache cache = KVCache::prefill(prefill_keys, prefill_values, cfg, layout);
            for (std::size_t t = n0; t < kv.keys.rows(); ++t) {
              cache.append_token(kv.keys.row(t), kv.values.row(t));
            }
            const auto [keys, values] = cache.materialize();
            const double ek = frobenius_error(kv.keys, keys);
            const double ev = frobenius_error(kv.values, values);
            const double total_norm = std::hypot(key_norm, value_norm);
            const auto report = account_state(cache, *s.index_bits);
            rows.push_back(
                {{b, sp, r, p, nb},
                 {std::to_string(b), csv::number(sp), std::to_string(r), csv::number(p),
                  std::to_string(nb), csv::number(key_norm > 0 ? ek / key_norm : 0.0),
                  csv::number(value_norm > 0 ? ev / value_norm : 0.0),
                  csv::number(total_norm > 0 ? std::hypot(ek, ev) / total_norm : 0.0),
                  csv::number(report.percent_of_fp16)}});
          }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  emit(ctx, out, [&](std::ostream& o) {
    o << csv::kSweepHeader << '\n';
    for (const auto& row : rows) csv::write_row(o, row.second);
  });
}

std::vector<NamedConfig> deviation_configs(const Settings& s) {
  const auto ids =
      s.configs.value_or(std::vector<std::string>{"fp16", "quant", "gear-l", "gear"});
  const GearConfig base = make_gear_config(s);
  std::vector<NamedConfig> out;
  for (const auto& id : ids) {
    GearConfig cfg = base;
    if (id == "fp16") {
      cfg.bit_width = kPassthroughBits;
      cfg.sparsity_percent = 0.0;
      cfg.rank_prefill = cfg.rank_decode = 0;
      cfg.key_scheme = cfg.value_scheme = GroupingScheme::per_token_vector();
    } else if (id == "quant") {
      cfg.sparsity_percent = 0.0;
      cfg.rank_prefill = cfg.rank_decode = 0;
    } else if (id == "outlier") {
      cfg.rank_prefill = cfg.rank_decode = 0;
    } else if (id == "gear-l") {
      cfg.sparsity_percent = 0.0;
    } else if (id != "gear") {
      invalid("unknown deviation config '" + id + "' (fp16, quant, outlier, gear-l, gear)");
    }
    out.push_back({id, cfg});
  }
  return out;
}

void run_deviate(const CommandContext& ctx, const Settings& s, std::ostream& out) {
  const auto configs = deviation_configs(s);
  const auto traces = run_deviation(make_synthetic_spec(s), configs, s.steps.value_or(50));
  emit(ctx, out, [&](std::ostream& o) { csv::write_deviation(o, traces); });
}

void run_account(const CommandContext& ctx, const Settings& s, std::ostream& out) {
  const GearConfig cfg = make_gear_config(s);
  AccountingOptions options;
  options.index_bits = *s.index_bits;
  if (*s.buffer_convention == "full") {
    options.buffer = BufferConvention::kFullCapacity;
  } else if (*s.buffer_convention == "half") {
    options.buffer = BufferConvention::kHalfCapacity;
  } else {
    invalid("--buffer-convention must be full or half");
  }
  const auto report = account(cfg, *s.n_prefill, *s.n_gen, *s.d, *s.heads, options);
  emit(ctx, out, [&](std::ostream& o) {
    if (*s.format == "table") {
      csv::write_memory_table(o, report);
      return;
    }
    if (*s.format != "csv") invalid("--format must be csv or table");
    o << csv::kAccountHeader << '\n';
    csv::write_row(o, {ctx.preset.empty() ? "custom" : ctx.preset, std::to_string(cfg.bit_width),
                       csv::number(cfg.sparsity_percent), std::to_string(cfg.rank_prefill),
                       std::to_string(cfg.rank_decode), std::to_string(cfg.buffer_size),
                       std::to_string(*s.n_prefill), std::to_string(*s.n_gen),
                       std::to_string(*s.d), std::to_string(*s.heads),
                       csv::number(report.code_bytes), csv::number(report.scale_zero_bytes),
                       csv::number(report.sparse_value_bytes),
                       csv::number(report.sparse_index_bytes), csv::number(report.lowrank_bytes),
                       csv::number(report.buffer_bytes), csv::number(report.total_bytes),
                       csv::number(report.fp16_bytes), csv::number(report.percent_of_fp16)});
  });
}

}  // namespace

std::optional<Settings> find_preset(std::string_view name) {
  std::string_view base = name;
  const bool gsm8k = name.size() > kGsm8kSuffix.size() && name.ends_with(kGsm8kSuffix);
  if (gsm8k) base = name.substr(0, name.size() - kGsm8kSuffix.size());
  for (const auto& [preset_name, settings] : base_presets()) {
    if (preset_name != base) continue;
    Settings s = settings;
    if (gsm8k) {
      s.n_prefill = 900;
      s.n_gen = 256;
      s.d = 1024;
      s.heads = 8;
    }
    return s;
  }
  return std::nullopt;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, settings] : base_presets()) {
    names.push_back(name);
    names.push_back(name + std::string(kGsm8kSuffix));
  }
  return names;
}

std::pair<GroupingScheme, GroupingScheme> backbone_schemes(std::string_view name) {
  if (name == "kcvt") {
    return {GroupingScheme::per_channel_vector(), GroupingScheme::per_token_vector()};
  }
  if (name.starts_with("per-token-g")) {
    const auto g = parse_group_suffix(name, "per-token-g");
    return {GroupingScheme::per_token_grouped(g), GroupingScheme::per_token_grouped(g)};
  }
  if (name.starts_with("kivi-g")) {
    const auto g = parse_group_suffix(name, "kivi-g");
    return {GroupingScheme::per_channel_grouped(g), GroupingScheme::per_token_grouped(g)};
  }
  invalid("unknown backbone '" + std::string(name) + "' (per-token-g64, kcvt, kivi-g64)");
}

GearConfig make_gear_config(const Settings& s) {
  const Settings d = [&] {
    Settings merged = builtin_defaults();
    merged.overlay(s);
    return merged;
  }();
  GearConfig cfg;
  cfg.bit_width = *d.bits;
  cfg.sparsity_percent = *d.sparsity;
  cfg.rank_prefill = *d.rank_prefill;
  cfg.rank_decode = *d.rank_decode;
  cfg.buffer_size = *d.buffer;
  std::tie(cfg.key_scheme, cfg.value_scheme) = backbone_schemes(*d.backbone);
  cfg.coverage_percent = *d.coverage;
  cfg.power_iterations = *d.iters;
  cfg.seed = d.seed.value_or(0);
  cfg.validate();
  return cfg;
}

SyntheticKVSpec make_synthetic_spec(const Settings& s) {
  Settings d = builtin_defaults();
  d.overlay(s);
  SyntheticKVSpec spec;
  spec.tokens = *d.n;
  spec.channels = *d.d;
  spec.heads = *d.heads;
  spec.seed = d.seed.value_or(0);
  spec.outlier_channels = *d.outlier_channels;
  spec.outlier_scale = *d.outlier_scale;
  spec.token_correlation = *d.rho;
  spec.validate();
  return spec;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GEAR KV-cache compression toolkit"};
  app.require_subcommand(1);

  CommandContext gen, compress, sweep, deviate, account_ctx;
  auto* gen_cmd = add_command(app, "gen", "write synthetic K/V/q tensors (KVT1)", gen);
  add_synthetic_flags(*gen.flags);
  gen.flags->bind("--seed", &Settings::seed, "seed (falls back to GEARKV_SEED)");

  auto* compress_cmd = add_command(app, "compress", "compress tensors and report errors", compress);
  compress_cmd->add_option("--in", compress.in_path, "KVT1 file or directory from gen");
  add_gear_flags(*compress.flags, false);
  add_synthetic_flags(*compress.flags);
  compress.flags->bind("--role", &Settings::role, "key | value (single-file input)");

  auto* sweep_cmd = add_command(app, "sweep", "cross config axes, one CSV row per cell", sweep);
  sweep_cmd->add_option("--in", sweep.in_path, "directory from gen (default: synthetic)");
  add_gear_flags(*sweep.flags, true);
  add_synthetic_flags(*sweep.flags);
  sweep.flags->bind("--steps", &Settings::steps, "trailing tokens streamed through the buffer");
  sweep.flags->bind("--index-bits", &Settings::index_bits, "accounted sparse index width");

  auto* deviate_cmd = add_command(app, "deviate", "per-step attention deviation traces", deviate);
  add_gear_flags(*deviate.flags, false);
  add_synthetic_flags(*deviate.flags);
  deviate.flags->bind("--steps", &Settings::steps, "decode steps");
  deviate.flags->bind("--configs", &Settings::configs, "fp16, quant, outlier, gear-l, gear")
      ->delimiter(',');

  auto* account_cmd = add_command(app, "account", "closed-form KV memory report", account_ctx);
  add_gear_flags(*account_ctx.flags, false);
  account_ctx.flags->bind("--d", &Settings::d, "channels");
  account_ctx.flags->bind("--heads", &Settings::heads, "attention heads");
  account_ctx.flags->bind("--n-prefill", &Settings::n_prefill, "prompt tokens");
  account_ctx.flags->bind("--n-gen", &Settings::n_gen, "generated tokens");
  account_ctx.flags->bind("--index-bits", &Settings::index_bits, "sparse index width in bits");
  account_ctx.flags->bind("--buffer-convention", &Settings::buffer_convention, "full | half");
  account_ctx.flags->bind("--format", &Settings::format, "csv | table");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("gearkv");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen_cmd) {
      run_gen(gen, resolve(gen, {}));
    } else if (*compress_cmd) {
      run_compress(compress, resolve(compress, builtin_defaults()), out);
    } else if (*sweep_cmd) {
      run_sweep(sweep, resolve(sweep, builtin_defaults()), out);
    } else if (*deviate_cmd) {
      run_deviate(deviate, resolve(deviate, builtin_defaults()), out);
    } else if (*account_cmd) {
      run_account(account_ctx, resolve(account_ctx, builtin_defaults()), out);
    }
  } catch (const Error& e) {
    err << "error code=" << to_string(e.code()) << " message=\"" << e.what() << "\"\n";
    return e.code() == ErrorCode::kInvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error code=internal message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}

}  // namespace gearkv::cli
