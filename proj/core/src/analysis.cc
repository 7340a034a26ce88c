#include "ctrkit/analysis.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "ctrkit/textio.h"

namespace ctrkit {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::size_t> offsets_of(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> out(sizes.size());
  std::exclusive_scan(sizes.begin(), sizes.end(), out.begin(), std::size_t{0});
  return out;
}

std::size_t total_of(const std::vector<std::size_t>& sizes) {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

Tensor uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Deterministic stream derivation so the spec, calibration sample and data
// draws never share random numbers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

std::vector<double> mean_embedding(const Tensor& table) {
  if (table.rows() == 0) throw Error("mean_embedding: empty field");
  std::vector<double> mean(table.cols(), 0.0);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < table.cols(); ++c) mean[c] += table(r, c);
  }
  for (auto& m : mean) m /= static_cast<double>(table.rows());
  return mean;
}

Heatmap heatmap(const Model& model, std::vector<std::string> field_names) {
  const Family family = model.spec().family;
  if (family != Family::kFm && family != Family::kFfm && family != Family::kKfm) {
    throw Error("heatmap: unsupported model family '" + model.name() + "'");
  }
  const std::size_t n = model.num_fields();
  if (field_names.empty()) {
    for (std::size_t i = 0; i < n; ++i) field_names.push_back("f" + std::to_string(i));
  }
  if (field_names.size() != n) throw Error("heatmap: field name count does not match model");
  Heatmap map{model.name(), std::move(field_names), Tensor(n, n)};
  const ParamStore& params = model.params();

  if (family == Family::kFfm) {
    const std::size_t k = model.spec().k;
    std::vector<std::vector<double>> centers;
    for (std::size_t i = 0; i < n; ++i) centers.push_back(mean_embedding(params.at(Model::ffm_name(i)).value));
    // Block of field i that interacts with field t.
    auto block = [&](std::size_t i, std::size_t t) {
      const std::size_t b = t < i ? t : t - 1;
      return std::span<const double>(centers[i]).subspan(b * k, k);
    };
    for (auto [i, j] : pair_index(n)) {
      map.values(i, j) = map.values(j, i) = dot(block(i, j), block(j, i));
    }
    return map;
  }

  std::vector<std::vector<double>> centers;
  for (std::size_t i = 0; i < n; ++i) {
    centers.push_back(mean_embedding(params.at(Model::embedding_name(i)).value));
  }
  for (auto [i, j] : pair_index(n)) {
    double value = 0;
    const auto& vi = centers[i];
    const auto& vj = centers[j];
    if (family == Family::kFm || model.spec().kernel == KernelMode::kIdentity) {
      if (vi.size() != vj.size()) throw Error("heatmap: embedding sizes differ");
      value = dot(vi, vj);
    } else {
      const Tensor& phi = params.at(Model::kernel_name(i, j)).value;
      if (model.spec().kernel == KernelMode::kVector) {
        for (std::size_t c = 0; c < vi.size(); ++c) value += vi[c] * phi(0, c) * vj[c];
      } else {
        for (std::size_t r = 0; r < phi.rows(); ++r) {
          for (std::size_t c = 0; c < phi.cols(); ++c) value += vi[r] * phi(r, c) * vj[c];
        }
      }
    }
    map.values(i, j) = map.values(j, i) = value;
  }
  return map;
}

void write_heatmap_csv(std::ostream& out, const Heatmap& map) {
  for (std::size_t i = 0; i < map.field_names.size(); ++i) {
    out << (i ? "," : "") << map.field_names[i];
  }
  out << "\n";
  for (std::size_t r = 0; r < map.values.rows(); ++r) {
    for (std::size_t c = 0; c < map.values.cols(); ++c) {
      out << (c ? "," : "") << format_double(map.values(r, c));
    }
    out << "\n";
  }
}

std::pair<double, double> write_heatmap_pgm(std::ostream& out, const Heatmap& map) {
  const auto values = map.values.values();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = values.empty() ? 0 : *lo_it;
  const double hi = values.empty() ? 0 : *hi_it;
  out << "P5\n" << map.values.cols() << " " << map.values.rows() << "\n255\n";
  for (double v : values) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255))));
  }
  return {lo, hi};
}

double smoothed_kl(std::span<const double> p, std::span<const double> q, double smoothing) {
  if (p.size() != q.size() || p.empty()) throw Error("kl: distributions differ in size");
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i] + smoothing;
    sq += q[i] + smoothing;
  }
  double kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = (p[i] + smoothing) / sp;
    const double b = (q[i] + smoothing) / sq;
    kl += a * std::log(a / b);
  }
  return std::max(kl, 0.0);
}

std::vector<DropoutBiasRow> dropout_bias_experiment(const DropoutBiasConfig& config) {
  if (config.categories == 0) throw Error("dropout bias: need at least one category");
  if (config.values_per_sample > config.categories) {
    throw Error("dropout bias: more values per sample than categories");
  }
  for (double rate : config.rates) {
    if (!(rate >= 0 && rate < 1)) throw Error("dropout bias: rate must be in [0, 1)");
  }
  std::mt19937_64 rng(config.seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> q(config.categories);
  for (auto& x : q) x = expo(rng);
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& x : q) x /= total;
  std::discrete_distribution<std::size_t> draw(q.begin(), q.end());

  std::vector<DropoutBiasRow> rows;
  std::vector<double> counts(config.categories);
  std::vector<std::size_t> sample;
  for (std::size_t bs : config.batch_sizes) {
    for (double rate : config.rates) {
      std::bernoulli_distribution keep(1 - rate);
      double kl_sum = 0;
      for (std::size_t trial = 0; trial < config.trials; ++trial) {
        std::fill(counts.begin(), counts.end(), 0.0);
        for (std::size_t s = 0; s < bs; ++s) {
          sample.clear();
          while (sample.size() < config.values_per_sample) {
            const std::size_t c = draw(rng);
            if (std::find(sample.begin(), sample.end(), c) == sample.end()) sample.push_back(c);
          }
          if (!keep(rng)) continue;
          for (auto c : sample) counts[c] += 1 / (1 - rate);
        }
        kl_sum += smoothed_kl(q, counts);
      }
      rows.push_back({bs, rate, kl_sum / static_cast<double>(config.trials)});
    }
  }
  return rows;
}

double Poly2Spec::score(std::span<const std::uint32_t> categories) const {
  const std::size_t n = field_sizes.size();
  double s = b;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += w[offset + categories[i]];
    offset += field_sizes[i];
  }
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++p) s += v[p](categories[i], categories[j]);
  }
  return s;
}

namespace {

std::vector<std::uint32_t> draw_instance(
    std::vector<std::discrete_distribution<std::uint32_t>>& fields, std::mt19937_64& rng) {
  std::vector<std::uint32_t> x(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) x[i] = fields[i](rng);
  return x;
}

std::vector<std::discrete_distribution<std::uint32_t>> field_samplers(const Poly2Spec& spec) {
  std::vector<std::discrete_distribution<std::uint32_t>> out;
  for (const auto& probs : spec.category_probs) out.emplace_back(probs.begin(), probs.end());
  return out;
}

}  // namespace

Poly2Spec make_poly2(const Poly2Options& options, std::uint64_t seed) {
  const std::size_t n = options.num_fields;
  if (n < 2) throw Error("poly2: need at least two fields");
  if (options.field_size == 0 && options.total_categories < n) {
    throw Error("poly2: total categories must be at least the number of fields");
  }
  if (options.noise_scale < 0) throw Error("poly2: noise scale must be non-negative");
  if (!(options.positive_ratio > 0 && options.positive_ratio < 1)) {
    throw Error("poly2: positive ratio must be in (0, 1)");
  }
  std::mt19937_64 rng(derive_seed(seed, 0));
  Poly2Spec spec;
  const std::size_t max_size = std::max<std::size_t>(1, 2 * options.total_categories / n);
  std::uniform_int_distribution<std::size_t> size_dist(1, max_size);
  for (std::size_t i = 0; i < n; ++i) {
    spec.field_sizes.push_back(options.field_size ? options.field_size : size_dist(rng));
  }
  std::exponential_distribution<double> expo(1.0);
  for (auto size : spec.field_sizes) {
    std::vector<double> probs(size);
    for (auto& p : probs) p = expo(rng);
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& p : probs) p /= total;
    spec.category_probs.push_back(std::move(probs));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  spec.w.resize(total_of(spec.field_sizes));
  for (auto& x : spec.w) x = normal(rng);
  for (auto [i, j] : pair_index(n)) {
    Tensor t(spec.field_sizes[i], spec.field_sizes[j]);
    for (auto& x : t.values()) x = normal(rng);
    spec.v.push_back(std::move(t));
  }
  spec.b = normal(rng);

  // Calibration sample for the score scale and the default threshold.
  std::mt19937_64 calib(derive_seed(seed, 1));
  auto samplers = field_samplers(spec);
  const std::size_t m = std::max<std::size_t>(options.calibration_samples, 1);
  std::vector<double> scores(m);
  for (auto& s : scores) s = spec.score(draw_instance(samplers, calib));
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(m);
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  spec.noise_std = options.noise_scale * std::sqrt(var / static_cast<double>(m));
  if (options.threshold) {
    spec.threshold = *options.threshold;
  } else {
    const auto q = static_cast<std::size_t>(
        std::floor((1 - options.positive_ratio) * static_cast<double>(m)));
    const auto at = scores.begin() + static_cast<std::ptrdiff_t>(std::min(q, m - 1));
    std::nth_element(scores.begin(), at, scores.end());
    spec.threshold = *at;
  }
  return spec;
}

Dataset poly2_generate(const Poly2Spec& spec, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 2));
  auto samplers = field_samplers(spec);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset data(spec.num_fields());
  std::size_t positives = 0;
  for (std::size_t r = 0; r < count; ++r) {
    const auto x = draw_instance(samplers, rng);
    double s = spec.score(x);
    if (spec.noise_std > 0) s += spec.noise_std * noise(rng);
    const int label = s >= spec.threshold ? 1 : 0;
    positives += static_cast<std::size_t>(label);
    data.add_single(label, x);
  }
  if (count > 0 && (positives == 0 || positives == count)) {
    throw Error("poly2: every generated label is " + std::to_string(positives ? 1 : 0));
  }
  return data;
}

OneHotDnn::OneHotDnn(std::vector<std::size_t> field_sizes, std::vector<std::size_t> hidden,
                     Activation act, std::uint64_t seed)
    : field_sizes_(std::move(field_sizes)), hidden_(std::move(hidden)), act_(act) {
  if (hidden_.empty()) throw Error("onehot dnn: need at least one hidden layer");
  offsets_ = offsets_of(field_sizes_);
  std::mt19937_64 rng(seed);
  const double n = static_cast<double>(field_sizes_.size());
  params_.add("onehot.w", ParamRole::kLinear,
              uniform(total_of(field_sizes_), hidden_[0],
                      std::sqrt(6.0 / (n + static_cast<double>(hidden_[0]))), rng));
  params_.add("onehot.b", ParamRole::kDense, Tensor(1, hidden_[0]));
  for (std::size_t l = 1; l <= hidden_.size(); ++l) {
    const std::size_t in = hidden_[l - 1];
    const std::size_t out = l < hidden_.size() ? hidden_[l] : 1;
    const std::string prefix = "dnn." + std::to_string(l) + ".";
    params_.add(prefix + "w", ParamRole::kDense,
                uniform(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng));
    params_.add(prefix + "b", ParamRole::kDense, Tensor(1, out));
  }
}

NodeId OneHotDnn::forward(Graph& g, const EncodedBatch& batch) {
  RowSelection sel;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t f = 0; f < batch.num_fields(); ++f) {
      const auto values = batch.values(b, f);
      const double w = 1.0 / static_cast<double>(values.size());
      for (auto v : values) sel.add(static_cast<std::uint32_t>(offsets_[f] + v), w);
    }
    sel.end_instance();
  }
  NodeId x = g.add_row(g.lookup(params_.at("onehot.w"), std::move(sel)),
                       g.parameter(params_.at("onehot.b")));
  for (std::size_t l = 1; l <= hidden_.size(); ++l) {
    x = g.activate(x, act_);
    const std::string prefix = "dnn." + std::to_string(l) + ".";
    x = g.add_row(g.matmul(x, g.parameter(params_.at(prefix + "w"))),
                  g.parameter(params_.at(prefix + "b")));
  }
  return x;
}

Poly2Regressor::Poly2Regressor(std::vector<std::size_t> field_sizes)
    : field_sizes_(std::move(field_sizes)) {
  if (field_sizes_.size() < 2) throw Error("poly2 regressor: need at least two fields");
  offsets_ = offsets_of(field_sizes_);
  std::size_t pairs_total = 0;
  for (auto [i, j] : pair_index(field_sizes_.size())) {
    pair_offsets_.push_back(pairs_total);
    pairs_total += field_sizes_[i] * field_sizes_[j];
  }
  params_.add("linear.w", ParamRole::kLinear, Tensor(total_of(field_sizes_), 1));
  params_.add("poly2.v", ParamRole::kLinear, Tensor(pairs_total, 1));
  params_.add("linear.b", ParamRole::kDense, Tensor(1, 1));
}

NodeId Poly2Regressor::forward(Graph& g, const EncodedBatch& batch) {
  const std::size_t n = field_sizes_.size();
  RowSelection linear, pairs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t f = 0; f < n; ++f) {
      const auto values = batch.values(b, f);
      const double w = 1.0 / static_cast<double>(values.size());
      for (auto v : values) linear.add(static_cast<std::uint32_t>(offsets_[f] + v), w);
    }
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto vi = batch.values(b, i);
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        const auto vj = batch.values(b, j);
        const double w = 1.0 / static_cast<double>(vi.size() * vj.size());
        for (auto a : vi) {
          for (auto c : vj) {
            pairs.add(static_cast<std::uint32_t>(pair_offsets_[p] + a * field_sizes_[j] + c), w);
          }
        }
      }
    }
    linear.end_instance();
    pairs.end_instance();
  }
  const NodeId sum = g.add(g.lookup(params_.at("linear.w"), std::move(linear)),
                           g.lookup(params_.at("poly2.v"), std::move(pairs)));
  return g.add_row(sum, g.parameter(params_.at("linear.b")));
}

std::vector<Poly2Curve> poly2_experiment(const Poly2ExperimentConfig& config) {
  const Poly2Spec spec = make_poly2(config.data, config.seed);
  const Dataset train_data = poly2_generate(spec, config.train_size, config.seed + 1);
  const Dataset valid_data = poly2_generate(spec, config.valid_size, config.seed + 2);
  TrainConfig tc = config.train;
  tc.keep_best = false;

  auto run = [&](Network& net, std::string name) {
    const TrainResult result = train(net, train_data, &valid_data, tc);
    Poly2Curve curve{std::move(name), {}, 0.5};
    for (const auto& row : result.log) {
      if (row.eval_auc) curve.auc.emplace_back(row.step, *row.eval_auc);
    }
    if (!curve.auc.empty()) curve.final_auc = curve.auc.back().second;
    return curve;
  };

  std::vector<Poly2Curve> curves;
  for (const auto& shape : config.dnn_shapes) {
    std::string name = "dnn";
    for (std::size_t l = 0; l < shape.size(); ++l) name += (l ? "x" : "-") + std::to_string(shape[l]);
    OneHotDnn net(spec.field_sizes, shape, Activation::kRelu, config.seed);
    curves.push_back(run(net, name));
  }
  if (config.include_poly2) {
    Poly2Regressor net(spec.field_sizes);
    curves.push_back(run(net, "poly2"));
  }
  return curves;
}

void write_curve_csv(std::ostream& out, const Poly2Curve& curve) {
  out << "# " << curve.name << "\n" << "step,auc\n";
  for (auto [step, value] : curve.auc) out << step << "," << format_double(value) << "\n";
}

}  // namespace ctrkit
