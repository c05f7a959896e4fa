#include "gearkv/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gearkv/error.hpp"
#include "gearkv/random.hpp"

namespace gearkv {

namespace {

void check_query(std::span<const float> query, std::size_t channels) {
  if (query.size() != channels) {
    throw Error(ErrorCode::kShape, "query has " + std::to_string(query.size()) +
                                       " channels, cache has " + std::to_string(channels));
  }
  if (!std::all_of(query.begin(), query.end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::kNonFinite, "query contains non-finite values");
  }
}

double head_dot(std::span<const float> query, std::span<const float> row, std::size_t offset,
                std::size_t width) {
  double sum = 0.0;
  for (std::size_t c = 0; c < width; ++c) {
    sum += static_cast<double>(query[offset + c]) * row[offset + c];
  }
  return sum;
}

// Max-subtracted softmax in place over `logits`.
void softmax(std::span<double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - peak);
    total += l;
  }
  for (double& l : logits) l /= total;
}

void accumulate_rows(const DenseMatrix& rows, std::span<const double> weights,
                     std::size_t first, std::size_t offset, std::size_t width,
                     std::span<double> out) {
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double w = weights[first + i];
    auto row = rows.row(i);
    for (std::size_t c = 0; c < width; ++c) out[c] += w * row[offset + c];
  }
}

}  // namespace

std::vector<double> attention_weights(std::span<const float> query, const DenseMatrix& keys,
                                      const HeadLayout& layout) {
  layout.check(keys.cols());
  check_query(query, keys.cols());
  if (keys.rows() == 0) throw Error(ErrorCode::kShape, "attention over an empty cache");
  const std::size_t n = keys.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(layout.head_dim));
  std::vector<double> weights(layout.head_count * n);
  for (std::size_t h = 0; h < layout.head_count; ++h) {
    std::span<double> logits(weights.data() + h * n, n);
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = head_dot(query, keys.row(i), h * layout.head_dim, layout.head_dim) * scale;
    }
    softmax(logits);
  }
  return weights;
}

std::vector<float> attention_step(std::span<const float> query, const DenseMatrix& keys,
                                  const DenseMatrix& values, const HeadLayout& layout) {
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw Error(ErrorCode::kShape, "keys and values differ in shape");
  }
  const auto weights = attention_weights(query, keys, layout);
  const std::size_t n = keys.rows();
  std::vector<float> out(layout.channels());
  std::vector<double> acc(layout.head_dim);
  for (std::size_t h = 0; h < layout.head_count; ++h) {
    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate_rows(values, std::span(weights).subspan(h * n, n), 0, h * layout.head_dim,
                    layout.head_dim, acc);
    for (std::size_t c = 0; c < layout.head_dim; ++c) {
      out[h * layout.head_dim + c] = static_cast<float>(acc[c]);
    }
  }
  return out;
}

std::vector<float> attention_step_compressed(std::span<const float> query,
                                             const KVCache& cache) {
  const HeadLayout& layout = cache.layout();
  check_query(query, layout.channels());
  const std::size_t n = cache.total_tokens();
  if (n == 0) throw Error(ErrorCode::kShape, "attention over an empty cache");

  const auto& key_blocks = cache.key_blocks();
  const auto& value_blocks = cache.value_blocks();
  std::vector<DenseMatrix> key_backbones;
  std::vector<DenseMatrix> value_backbones;
  for (const auto& b : key_blocks) key_backbones.push_back(b.backbone_dense());
  for (const auto& b : value_blocks) value_backbones.push_back(b.backbone_dense());

  const std::size_t dh = layout.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<float> out(layout.channels());
  std::vector<double> logits(n);
  std::vector<double> acc(dh);

  for (std::size_t h = 0; h < layout.head_count; ++h) {
    const std::size_t lo = h * dh;
    const std::size_t hi = lo + dh;

    // Logits: dense backbone rows, then the low-rank and sparse side paths.
    for (std::size_t bi = 0; bi < key_blocks.size(); ++bi) {
      const auto& block = key_blocks[bi];
      const std::size_t first = block.tokens.begin;
      for (std::size_t i = 0; i < block.rows(); ++i) {
        logits[first + i] = head_dot(query, key_backbones[bi].row(i), lo, dh);
      }
      const auto& lr = block.lowrank;
      if (!lr.empty()) {
        const auto& f = lr.heads[h];
        std::vector<double> down(lr.rank, 0.0);  // q_h^T B_h
        for (std::size_t c = 0; c < dh; ++c) {
          auto b_row = f.b.row(c);
          for (std::size_t k = 0; k < lr.rank; ++k) down[k] += static_cast<double>(query[lo + c]) * b_row[k];
        }
        for (std::size_t i = 0; i < f.a.rows(); ++i) {
          auto a_row = f.a.row(i);
          double up = 0.0;
          for (std::size_t k = 0; k < lr.rank; ++k) up += down[k] * a_row[k];
          logits[first + lr.row_offset + i] += up;
        }
      }
      for (const auto& e : block.outliers.entries) {
        if (e.col >= lo && e.col < hi) {
          logits[first + e.row] += static_cast<double>(query[e.col]) * e.value;
        }
      }
    }
    const DenseMatrix& key_buffer = cache.key_buffer();
    const std::size_t buffer_first = n - key_buffer.rows();
    for (std::size_t i = 0; i < key_buffer.rows(); ++i) {
      logits[buffer_first + i] = head_dot(query, key_buffer.row(i), lo, dh);
    }
    for (double& l : logits) l *= scale;
    softmax(logits);

    // Weighted values: backbone rows, then (w^T A_h) B_h^T and sparse terms.
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t bi = 0; bi < value_blocks.size(); ++bi) {
      accumulate_rows(value_backbones[bi], logits, value_blocks[bi].tokens.begin, lo, dh, acc);
    }
    accumulate_rows(cache.value_buffer(), logits, buffer_first, lo, dh, acc);
    for (const auto& block : value_blocks) {
      const std::size_t first = block.tokens.begin;
      const auto& lr = block.lowrank;
      if (!lr.empty()) {
        const auto& f = lr.heads[h];
        std::vector<double> down(lr.rank, 0.0);  // w^T A_h
        for (std::size_t i = 0; i < f.a.rows(); ++i) {
          const double w = logits[first + lr.row_offset + i];
          auto a_row = f.a.row(i);
          for (std::size_t k = 0; k < lr.rank; ++k) down[k] += w * a_row[k];
        }
        for (std::size_t c = 0; c < dh; ++c) {
          auto b_row = f.b.row(c);
          double up = 0.0;
          for (std::size_t k = 0; k < lr.rank; ++k) up += down[k] * b_row[k];
          acc[c] += up;
        }
      }
      for (const auto& e : block.outliers.entries) {
        if (e.col >= lo && e.col < hi) acc[e.col - lo] += logits[first + e.row] * e.value;
      }
    }
    for (std::size_t c = 0; c < dh; ++c) out[lo + c] = static_cast<float>(acc[c]);
  }
  return out;
}

void SyntheticKVSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (channels == 0) fail("synthetic spec needs at least one channel");
  if (heads == 0 || channels % heads != 0) fail("heads must divide channels");
  if (outlier_channels > channels) fail("more outlier channels than channels");
  if (!(token_correlation >= 0.0 && token_correlation < 1.0)) {
    fail("token correlation must lie in [0, 1)");
  }
  if (!(outlier_scale > 0.0) || !std::isfinite(outlier_scale)) fail("outlier scale must be > 0");
}

namespace {

// Every channel is zero-mean and mixes a few shared AR(1) latent factors
// with a channel-private AR(1) term, so lag-1 correlation is rho for all
// channels and the unscaled channel magnitudes match in expectation.
constexpr std::size_t kLatentFactors = 4;
constexpr double kSharedScale = 0.8;
constexpr double kPrivateScale = 0.6;

DenseMatrix correlated_stream(const SyntheticKVSpec& spec, std::uint64_t seed,
                              std::span<const double> channel_scale) {
  GaussianStream gauss(seed);
  const std::size_t d = spec.channels;
  // Random unit-norm loading direction per channel, scaled to kSharedScale.
  std::vector<double> loading(kLatentFactors * d);
  for (double& w : loading) w = gauss.next();
  for (std::size_t c = 0; c < d; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < kLatentFactors; ++j) norm += loading[j * d + c] * loading[j * d + c];
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < kLatentFactors; ++j) {
      loading[j * d + c] = norm > 0.0 ? kSharedScale * loading[j * d + c] / norm : 0.0;
    }
  }
  std::vector<double> latent(kLatentFactors);
  for (double& z : latent) z = gauss.next();
  std::vector<double> state(d);
  for (double& s : state) s = gauss.next();
  const double rho = spec.token_correlation;
  const double innovation = std::sqrt(1.0 - rho * rho);

  DenseMatrix out(spec.tokens, d);
  for (std::size_t t = 0; t < spec.tokens; ++t) {
    if (t > 0) {
      for (double& z : latent) z = rho * z + innovation * gauss.next();
      for (double& s : state) s = rho * s + innovation * gauss.next();
    }
    for (std::size_t c = 0; c < d; ++c) {
      double shared = 0.0;
      for (std::size_t j = 0; j < kLatentFactors; ++j) shared += latent[j] * loading[j * d + c];
      out(t, c) = static_cast<float>((shared + kPrivateScale * state[c]) * channel_scale[c]);
    }
  }
  return out;
}

}  // namespace

SyntheticKV generate_synthetic_kv(const SyntheticKVSpec& spec) {
  spec.validate();
  const std::size_t d = spec.channels;

  // Partial Fisher-Yates over channel ids picks the outlier channels.
  GaussianStream picker(derive_seed({spec.seed, 0x6f75746cULL}));
  std::vector<std::size_t> ids(d);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < spec.outlier_channels; ++i) {
    const auto j = i + static_cast<std::size_t>(picker.uniform() * static_cast<double>(d - i));
    std::swap(ids[i], ids[std::min(j, d - 1)]);
  }
  SyntheticKV out;
  out.outlier_channels.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(spec.outlier_channels));
  std::sort(out.outlier_channels.begin(), out.outlier_channels.end());

  std::vector<double> key_scale(d, 1.0);
  for (auto c : out.outlier_channels) key_scale[c] = spec.outlier_scale;
  const std::vector<double> unit(d, 1.0);

  out.keys = correlated_stream(spec, derive_seed({spec.seed, 1}), key_scale);
  out.values = correlated_stream(spec, derive_seed({spec.seed, 2}), unit);

  GaussianStream gauss(derive_seed({spec.seed, 3}));
  out.queries = DenseMatrix(spec.tokens, d);
  for (float& v : out.queries.values()) v = static_cast<float>(gauss.next());
  return out;
}

double DeviationTrace::mean_deviation() const {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += r.l2_deviation;
  return sum / static_cast<double>(records.size());
}

std::vector<DeviationTrace> run_deviation(const SyntheticKVSpec& spec,
                                          std::span<const NamedConfig> configs,
                                          std::size_t steps) {
  if (steps == 0) throw Error(ErrorCode::kInvalidConfig, "deviation run needs steps >= 1");
  SyntheticKVSpec stream_spec = spec;
  stream_spec.tokens = spec.tokens + steps;
  const SyntheticKV stream = generate_synthetic_kv(stream_spec);
  const HeadLayout layout = spec.layout();
  const std::size_t n0 = spec.tokens;

  std::vector<DeviationTrace> traces;
  for (const auto& named : configs) {
    DeviationTrace trace{named.id, {}};
    DenseMatrix exact_keys = slice_rows(stream.keys, 0, n0);
    DenseMatrix exact_values = slice_rows(stream.values, 0, n0);
    KVCache cache = KVCache::prefill(exact_keys, exact_values, named.config, layout);

    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t t = n0 + step;
      exact_keys.append_row(stream.keys.row(t));
      exact_values.append_row(stream.values.row(t));
      cache.append_token(stream.keys.row(t), stream.values.row(t));

      const auto query = stream.queries.row(t);
      const auto exact = attention_step(query, exact_keys, exact_values, layout);
      const auto approx = attention_step_compressed(query, cache);

      double diff = 0.0, dot = 0.0, ne = 0.0, na = 0.0;
      for (std::size_t c = 0; c < exact.size(); ++c) {
        const double e = exact[c], a = approx[c];
        diff += (a - e) * (a - e);
        dot += a * e;
        ne += e * e;
        na += a * a;
      }
      double cosine = 1.0;
      if (ne > 0.0 && na > 0.0) {
        cosine = std::clamp(dot / std::sqrt(ne * na), -1.0, 1.0);
      } else if (ne != na) {
        cosine = 0.0;
      }
      trace.records.push_back({step, std::sqrt(diff), cosine});
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

}  // namespace gearkv
