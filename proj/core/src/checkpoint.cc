#include "ctrkit/checkpoint.h"

#include <istream>
#include <ostream>
#include <sstream>

#include "ctrkit/textio.h"

namespace ctrkit {
namespace {

std::string header_value(const std::string& token, const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) throw Error("checkpoint: expected '" + key + "=' in header");
  return token.substr(key.size() + 1);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(std::ostream& out, const std::string& model, std::size_t num_fields,
                     std::uint64_t seed, const ParamStore& params) {
  out << "CKPT v1 model=" << model << " n=" << num_fields << " seed=" << seed << '\n';
  for (const auto& p : params) {
    const Tensor& t = p->value;
    out << "tensor " << p->name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(t(r, c));
      }
      out << '\n';
    }
  }
}

Checkpoint load_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint: empty input");
  {
    std::istringstream header(line);
    std::string magic, version, model, n, seed;
    header >> magic >> version >> model >> n;
    if (magic != "CKPT" || version != "v1") throw Error("checkpoint: bad header '" + line + "'");
    ckpt.model = header_value(model, "model");
    if (!parse_size(header_value(n, "n"), ckpt.num_fields)) {
      throw Error("checkpoint: bad field count in header");
    }
    if (header >> seed) {
      std::size_t s = 0;
      if (!parse_size(header_value(seed, "seed"), s)) throw Error("checkpoint: bad seed");
      ckpt.seed = s;
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string kw, name;
    std::size_t rows = 0, cols = 0;
    if (!(head >> kw >> name >> rows >> cols) || kw != "tensor") {
      throw Error("checkpoint: expected tensor header, got '" + line + "'");
    }
    Tensor t(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw Error("checkpoint: truncated tensor '" + name + "'");
      std::istringstream row(line);
      std::string tok;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(row >> tok) || !parse_double(tok, t(r, c))) {
          throw Error("checkpoint: bad value in tensor '" + name + "'");
        }
      }
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void restore(const Checkpoint& ckpt, ParamStore& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw Error("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, t] : ckpt.tensors) {
    Parameter* p = params.find(name);
    if (!p) throw Error("checkpoint tensor '" + name + "' is not a model parameter");
    if (!p->value.same_shape(t)) {
      throw Error("checkpoint tensor '" + name + "' has shape " + t.shape_string() +
                  ", model expects " + p->value.shape_string());
    }
    p->value = t;
  }
}

}  // namespace ctrkit
