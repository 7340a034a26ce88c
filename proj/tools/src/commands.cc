#include "ctrkit_cli/commands.h"

#include <fstream>
#include <random>

#include "ctrkit/analysis.h"
#include "ctrkit/checkpoint.h"
#include "ctrkit/gradcheck.h"
#include "ctrkit/metrics.h"
#include "ctrkit/optim.h"
#include "ctrkit/textio.h"

namespace ctrkit::cli {
namespace {

namespace fs = std::filesystem;

const std::string& required_path(const Config& c, const std::string& key) {
  const std::string& path = c.text(key);
  if (path.empty()) throw Error("config key '" + key + "' must name a file");
  return path;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::set<std::string> set_fields(const Config& c) {
  const auto list = c.list("set_fields");
  return {list.begin(), list.end()};
}

FeatureMap load_map(const Config& c) {
  const std::string& path = required_path(c, "map");
  auto in = open_in(path);
  try {
    return FeatureMap::load(in, set_fields(c));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

Dataset load_data(const std::string& path, const FeatureMap& map) {
  auto in = open_in(path);
  Dataset data;
  try {
    data = Dataset::load(in, map.num_fields());
    data.validate(map.field_sizes());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  return data;
}

Model load_model(const Config& c, const FeatureMap& map) {
  Model model(model_spec(c), map.field_sizes(), c.seed());
  const std::string& path = required_path(c, "checkpoint");
  auto in = open_in(path);
  try {
    const Checkpoint ckpt = load_checkpoint(in);
    if (ckpt.model != model.name()) {
      throw Error("checkpoint holds model '" + ckpt.model + "' but config says '" +
                  model.name() + "'");
    }
    if (ckpt.num_fields != map.num_fields()) {
      throw Error("checkpoint has " + std::to_string(ckpt.num_fields) +
                  " fields but the feature map has " + std::to_string(map.num_fields()));
    }
    restore(ckpt, model.params());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  return model;
}

std::string report_line(const MetricsReport& r) {
  return "auc=" + format_double(r.auc) + " logloss=" + format_double(r.logloss) +
         " count=" + std::to_string(r.count) + " positive_ratio=" + format_double(r.positive_ratio);
}

void make_map(const Config& c, const fs::path& out, std::ostream& log) {
  const std::string& path = required_path(c, "raw");
  auto in = open_in(path);
  const auto records = read_raw_csv(in);
  const FeatureMap map = build_map(records, map_options(c));
  auto file = open_out(out / "map.txt");
  map.save(file);
  log << "map: " << map.num_fields() << " fields, " << map.total_categories()
      << " categories from " << records.size() << " records\n";
}

void encode_data(const Config& c, const fs::path& out, std::ostream& log) {
  const FeatureMap map = load_map(c);
  const std::string& path = required_path(c, "raw");
  auto in = open_in(path);
  Dataset data(map.num_fields());
  std::size_t line = 1;
  for (const auto& record : read_raw_csv(in)) {
    ++line;
    try {
      data.add(encode(record, map));
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  const double target = c.number("downsample");
  if (target > 0) data = downsample_negatives(data, target, c.seed());
  auto file = open_out(out / "encoded.txt");
  data.save(file);
  log << "encoded " << data.size() << " instances, positive ratio "
      << format_double(data.positive_ratio()) << "\n";
}

void train_model(const Config& c, const fs::path& out, std::ostream& log) {
  const FeatureMap map = load_map(c);
  const Dataset train_data = load_data(required_path(c, "train"), map);
  std::optional<Dataset> valid;
  if (!c.text("valid").empty()) valid = load_data(c.text("valid"), map);
  Model model(model_spec(c), map.field_sizes(), c.seed());
  if (!c.text("pretrain").empty()) {
    auto in = open_in(c.text("pretrain"));
    pretrain_embeddings(load_checkpoint(in), model);
  }
  const TrainConfig tc = train_config(c);
  const TrainResult result = train(model, train_data, valid ? &*valid : nullptr, tc);
  {
    auto file = open_out(out / "checkpoint.txt");
    save_checkpoint(file, model.name(), model.num_fields(), c.seed(), model.params());
  }
  {
    auto file = open_out(out / "train_log.csv");
    write_training_log(file, result, c.seed());
  }
  log << "trained " << model.name() << " for " << result.steps << " steps";
  if (result.best_eval) log << "; best eval " << report_line(*result.best_eval);
  log << "\n";
}

void evaluate_model(const Config& c, const fs::path& out, std::ostream& log) {
  const FeatureMap map = load_map(c);
  Model model = load_model(c, map);
  const Dataset data = load_data(required_path(c, "data"), map);
  const MetricsReport report = evaluate(model, data, c.count("bs"));
  auto file = open_out(out / "metrics.txt");
  file << report_line(report) << "\n";
  log << report_line(report) << "\n";
}

void write_heatmap(const Config& c, const fs::path& out, std::ostream& log) {
  const FeatureMap map = load_map(c);
  const Model model = load_model(c, map);
  std::vector<std::string> names;
  for (const auto& f : map.fields()) names.push_back(f.name);
  const Heatmap hm = heatmap(model, names);
  {
    auto file = open_out(out / "heatmap.csv");
    write_heatmap_csv(file, hm);
  }
  std::pair<double, double> range;
  {
    auto file = open_out(out / "heatmap.pgm");
    range = write_heatmap_pgm(file, hm);
  }
  auto file = open_out(out / "heatmap_range.txt");
  file << "model=" << hm.family << "\nmin=" << format_double(range.first)
       << "\nmax=" << format_double(range.second) << "\n";
  log << "heatmap for " << hm.field_names.size() << " fields, range ["
      << format_double(range.first) << ", " << format_double(range.second) << "]\n";
}

void synth(const Config& c, const fs::path& out, std::ostream& log) {
  const std::uint64_t seed = c.seed();
  Poly2ExperimentConfig ec;
  ec.data = poly2_options(c);
  ec.train_size = c.count("synth_train");
  ec.valid_size = c.count("synth_valid");
  ec.seed = seed;
  const Poly2Spec spec = make_poly2(ec.data, seed);
  const Dataset train_data = poly2_generate(spec, ec.train_size, seed + 1);
  const Dataset valid_data = poly2_generate(spec, ec.valid_size, seed + 2);
  {
    auto file = open_out(out / "synth_map.txt");
    FeatureMap::synthetic(spec.field_sizes).save(file);
  }
  {
    auto file = open_out(out / "synth_train.txt");
    train_data.save(file);
  }
  {
    auto file = open_out(out / "synth_valid.txt");
    valid_data.save(file);
  }
  log << "poly-2 data: " << spec.num_fields() << " fields, threshold "
      << format_double(spec.threshold) << ", train positive ratio "
      << format_double(train_data.positive_ratio()) << "\n";

  ec.dnn_shapes.clear();
  for (const auto& item : c.list("synth_dnn")) {
    Config one;
    one.set("net", item);
    ec.dnn_shapes.push_back(one.sizes("net"));
  }
  ec.include_poly2 = c.flag("synth_poly2");
  if (ec.dnn_shapes.empty() && !ec.include_poly2) return;
  ec.train = train_config(c);
  for (const auto& curve : poly2_experiment(ec)) {
    auto file = open_out(out / ("curve_" + curve.name + ".csv"));
    file << "# seed=" << seed << "\n";
    write_curve_csv(file, curve);
    log << curve.name << ": final auc " << format_double(curve.final_auc) << "\n";
  }
}

void diag_adam(const Config& c, const fs::path& out, std::ostream& log) {
  const double beta1 = c.number("beta1"), beta2 = c.number("beta2");
  const auto ts = c.numbers("diag_t");
  {
    auto file = open_out(out / "gstar.csv");
    file << "# seed=" << c.seed() << " beta2=" << format_double(beta2) << "\n";
    file << "t,eps,gstar\n";
    for (double t : ts) {
      for (double eps : c.numbers("diag_eps")) {
        file << format_double(t) << "," << format_double(eps) << ","
             << format_double(gstar(eps, beta2, t)) << "\n";
      }
    }
  }
  auto file = open_out(out / "long_tail.csv");
  const double eps = c.number("eps");
  file << "# seed=" << c.seed() << " beta1=" << format_double(beta1)
       << " beta2=" << format_double(beta2) << " eps=" << format_double(eps) << "\n";
  file << "t,g_t,T,g_prime\n";
  for (double t : ts) {
    for (double g : c.numbers("diag_g")) {
      for (double window : c.numbers("diag_window")) {
        file << format_double(t) << "," << format_double(g) << "," << format_double(window) << ","
             << format_double(long_tail_gradient(g, t, window, beta1, beta2, eps)) << "\n";
      }
    }
  }
  log << "wrote gstar.csv and long_tail.csv\n";
}

void diag_dropout(const Config& c, const fs::path& out, std::ostream& log) {
  DropoutBiasConfig dc;
  dc.categories = c.count("dropout_categories");
  dc.batch_sizes = c.sizes("dropout_batch_sizes");
  dc.rates = c.numbers("dropout_rates");
  dc.trials = c.count("dropout_trials");
  dc.seed = c.seed();
  auto file = open_out(out / "dropout_bias.csv");
  file << "# seed=" << dc.seed << "\n" << "batch_size,rate,mean_kl\n";
  for (const auto& row : dropout_bias_experiment(dc)) {
    file << row.batch_size << "," << format_double(row.rate) << "," << format_double(row.mean_kl)
         << "\n";
    log << "bs=" << row.batch_size << " rate=" << format_double(row.rate)
        << " kl=" << format_double(row.mean_kl) << "\n";
  }
}

void grad_check_model(const Config& c, const fs::path& out, std::ostream& log) {
  const std::size_t n = c.count("gc_fields");
  const std::size_t size = c.count("gc_field_size");
  const std::size_t batch_size = c.count("gc_batch");
  if (size == 0 || batch_size == 0) throw Error("grad-check: field size and batch must be positive");
  Model model(model_spec(c), std::vector<std::size_t>(n, size), c.seed());
  std::mt19937_64 rng(c.seed());
  const double scale = c.number("gc_scale");
  if (scale > 0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& p : model.params()) {
      for (auto& v : p->value.values()) v = dist(rng);
    }
  }
  std::uniform_int_distribution<std::uint32_t> category(0, static_cast<std::uint32_t>(size - 1));
  Dataset data(n);
  std::vector<std::uint32_t> x(n);
  for (std::size_t b = 0; b < batch_size; ++b) {
    for (auto& v : x) v = category(rng);
    data.add_single(static_cast<int>(b % 2), x);
  }
  const EncodedBatch batch(data);
  const auto labels = batch.labels();
  const GradCheckReport report = grad_check(
      [&](Graph& g) { return g.logloss(model.forward(g, batch), labels); }, model.params(),
      c.number("gc_h"), c.number("gc_tol"));
  auto file = open_out(out / "grad_check.txt");
  const std::string line = "model=" + model.name() + " coordinates=" +
                           std::to_string(report.coordinates) +
                           " skipped_kinks=" + std::to_string(report.skipped_kinks) +
                           " max_relative_error=" +
                           format_double(report.max_relative_error) + " worst=" +
                           report.worst_parameter + "[" + std::to_string(report.worst_coordinate) +
                           "] passed=" + (report.passed ? "true" : "false");
  file << line << "\n";
  log << line << "\n";
  if (!report.passed) throw Error("gradient check failed");
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"make-map", "encode",  "train",
                                              "evaluate", "heatmap", "synth",
                                              "diag-adam", "diag-dropout", "grad-check"};
  return names;
}

void run_command(const std::string& command, const Config& config, const fs::path& out,
                 std::ostream& log) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error("cannot create output directory '" + out.string() + "': " + ec.message());
  if (command == "make-map") return make_map(config, out, log);
  if (command == "encode") return encode_data(config, out, log);
  if (command == "train") return train_model(config, out, log);
  if (command == "evaluate") return evaluate_model(config, out, log);
  if (command == "heatmap") return write_heatmap(config, out, log);
  if (command == "synth") return synth(config, out, log);
  if (command == "diag-adam") return diag_adam(config, out, log);
  if (command == "diag-dropout") return diag_dropout(config, out, log);
  if (command == "grad-check") return grad_check_model(config, out, log);
  throw Error("unknown command '" + command + "'");
}

}  // namespace ctrkit::cli
