#include "ctrkit_cli/config.h"

#include <algorithm>
#include <cctype>

#include "ctrkit/textio.h"

namespace ctrkit::cli {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(std::string_view text) {
  std::string s = trim(text);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string item = trim(std::string_view(s).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Error bad_value(const std::string& key, const std::string& value, const char* expected) {
  return Error("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

}  // namespace

Config::Config() {
  values_ = {
      // run
      {"model", "fm"},
      {"seed", "1"},
      // data
      {"raw", ""},
      {"map", ""},
      {"train", ""},
      {"valid", ""},
      {"data", ""},
      {"checkpoint", ""},
      {"pretrain", ""},
      {"min_count", "1"},
      {"buckets", "10"},
      {"numerical_fields", ""},
      {"set_fields", ""},
      {"downsample", "0"},
      // model
      {"k", "10"},
      {"adaptive", "false"},
      {"adaptive_c", "4"},
      {"adaptive_max", "40"},
      {"net", ""},
      {"act", "relu"},
      {"ln", "false"},
      {"drop", "0"},
      {"sub_net", "40,5"},
      {"sub_net_act", "tanh"},
      {"sub_net_ln", "true"},
      {"kernel", "matrix"},
      {"t", "1"},
      {"h", "32"},
      {"init", "nk"},
      {"init_c", "1"},
      // optimizer
      {"opt", "adam"},
      {"lr", "0.001"},
      {"beta1", "0.9"},
      {"beta2", "0.999"},
      {"eps", "1e-8"},
      {"sparse", "true"},
      {"l2", "0"},
      {"l2_a", "0"},
      {"l2_global", "0"},
      // training
      {"bs", "2000"},
      {"epochs", "1"},
      {"eval_every", "0"},
      {"keep_best", "true"},
      // synthetic poly-2 data and experiment
      {"synth_fields", "10"},
      {"synth_categories", "200"},
      {"synth_field_size", "0"},
      {"synth_noise", "0.01"},
      {"synth_positive_ratio", "0.5"},
      {"synth_threshold", ""},
      {"synth_train", "100000"},
      {"synth_valid", "20000"},
      {"synth_dnn", ""},
      {"synth_poly2", "true"},
      // diagnostics
      {"diag_eps", "1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8"},
      {"diag_t", "1,10,100,1000,10000,100000"},
      {"diag_g", "1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1"},
      {"diag_window", "0,1,2,5,10,20,30,40,50,60"},
      {"dropout_categories", "1000"},
      {"dropout_batch_sizes", "100,200,500,1000"},
      {"dropout_rates", "0,0.5"},
      {"dropout_trials", "100"},
      {"gc_fields", "3"},
      {"gc_field_size", "4"},
      {"gc_batch", "8"},
      {"gc_h", "1e-3"},
      {"gc_tol", "1e-4"},
      {"gc_scale", "0.5"},
  };
}

void Config::set(const std::string& key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + key + "'");
  it->second = std::move(value);
}

void Config::parse(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      set(key, trim(std::string_view(body).substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error("override '" + std::string(assignment) + "' must be key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  const std::string& v = text(key);
  double out;
  if (!parse_double(v, out)) throw bad_value(key, v, "a number");
  return out;
}

std::size_t Config::count(const std::string& key) const {
  const std::string& v = text(key);
  std::size_t out;
  if (!parse_size(v, out)) throw bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t Config::seed() const { return count("seed"); }

bool Config::flag(const std::string& key) const {
  const std::string& v = text(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw bad_value(key, v, "true or false");
}

std::vector<std::size_t> Config::sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text(key))) {
    const auto x = item.find_first_of("x*");
    std::size_t value, repeat = 1;
    if (x == std::string::npos) {
      if (!parse_size(item, value)) throw bad_value(key, item, "a size");
    } else if (!parse_size(item.substr(0, x), repeat) || !parse_size(item.substr(x + 1), value)) {
      throw bad_value(key, item, "a size or COUNTxSIZE");
    }
    out.insert(out.end(), repeat, value);
  }
  return out;
}

std::vector<double> Config::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(text(key))) {
    double value;
    if (!parse_double(item, value)) throw bad_value(key, item, "a number");
    out.push_back(value);
  }
  return out;
}

std::vector<std::string> Config::list(const std::string& key) const {
  return split_list(text(key));
}

ModelSpec model_spec(const Config& c) {
  ModelSpec s;
  s.family = parse_family(c.text("model"));
  s.k = c.count("k");
  s.adaptive = c.flag("adaptive");
  s.adaptive_c = c.number("adaptive_c");
  s.adaptive_max = c.count("adaptive_max");
  s.net = c.sizes("net");
  s.act = parse_activation(c.text("act"));
  s.ln = c.flag("ln");
  s.dropout = c.number("drop");
  const auto sub = c.sizes("sub_net");
  if (sub.size() != 2) throw Error("config key 'sub_net': expected 'hidden,output'");
  s.subnet_hidden = sub[0];
  s.subnet_out = sub[1];
  s.subnet_act = parse_activation(c.text("sub_net_act"));
  s.subnet_ln = c.flag("sub_net_ln");
  s.kernel = parse_kernel_mode(c.text("kernel"));
  s.attention_t = c.number("t");
  s.attention_h = c.count("h");
  s.init = parse_embedding_init(c.text("init"));
  s.init_c = c.number("init_c");
  return s;
}

OptimizerConfig optimizer_config(const Config& c) {
  OptimizerConfig o;
  o.kind = parse_optimizer(c.text("opt"));
  o.lr = c.number("lr");
  o.beta1 = c.number("beta1");
  o.beta2 = c.number("beta2");
  o.epsilon = c.number("eps");
  o.sparse_update = c.flag("sparse");
  o.l2 = c.number("l2");
  o.l2_attention = c.number("l2_a");
  o.l2_global = c.number("l2_global");
  o.validate();
  return o;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.optimizer = optimizer_config(c);
  t.epochs = c.count("epochs");
  t.batch_size = c.count("bs");
  if (t.batch_size == 0) throw Error("config key 'bs': must be positive");
  t.seed = c.seed();
  t.eval_every = c.count("eval_every");
  t.keep_best = c.flag("keep_best");
  return t;
}

MapOptions map_options(const Config& c) {
  MapOptions m;
  m.min_count = c.count("min_count");
  m.bucket_count = c.count("buckets");
  for (const auto& f : c.list("numerical_fields")) m.numerical_fields.insert(f);
  for (const auto& f : c.list("set_fields")) m.set_fields.insert(f);
  return m;
}

Poly2Options poly2_options(const Config& c) {
  Poly2Options p;
  p.num_fields = c.count("synth_fields");
  p.total_categories = c.count("synth_categories");
  p.field_size = c.count("synth_field_size");
  p.noise_scale = c.number("synth_noise");
  p.positive_ratio = c.number("synth_positive_ratio");
  if (!c.text("synth_threshold").empty()) p.threshold = c.number("synth_threshold");
  return p;
}

}  // namespace ctrkit::cli
