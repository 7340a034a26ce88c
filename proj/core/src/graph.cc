#include "ctrkit/graph.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace ctrkit {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(message);
}

}  // namespace

Graph::Graph(bool training, std::uint64_t seed) : training_(training), rng_(seed) {}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->value : n.value;
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->grad : n.grad;
}

Tensor& Graph::mutable_value(NodeId id) {
  Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Tensor& Graph::mutable_grad(NodeId id) {
  Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

NodeId Graph::push(Tensor value, std::function<void(Graph&, NodeId)> backward, const char* op) {
  if (!value.all_finite()) throw Error(std::string("non-finite value produced by ") + op);
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, std::move(backward)});
  return nodes_.size() - 1;
}

void Graph::check(NodeId id) const {
  require(id < nodes_.size(), "graph: unknown node " + std::to_string(id));
}

NodeId Graph::constant(Tensor value) { return push(std::move(value), nullptr, "constant"); }

NodeId Graph::parameter(Parameter& p) {
  if (!p.value.all_finite()) throw Error("non-finite parameter '" + p.name + "'");
  nodes_.push_back(Node{Tensor(), Tensor(), &p, nullptr});
  return nodes_.size() - 1;
}

NodeId Graph::lookup(Parameter& table, RowSelection sel) {
  const std::size_t width = table.value.cols();
  const std::size_t batch = sel.batch_size();
  Tensor out(batch, width);
  for (std::size_t b = 0; b < batch; ++b) {
    auto dst = out.row_span(b);
    for (std::size_t e = sel.offsets[b]; e < sel.offsets[b + 1]; ++e) {
      require(sel.rows[e] < table.value.rows(),
              "lookup: row " + std::to_string(sel.rows[e]) + " out of range for '" +
                  table.name + "' with " + std::to_string(table.value.rows()) + " rows");
      const auto src = table.value.row_span(sel.rows[e]);
      const double w = sel.weights[e];
      for (std::size_t c = 0; c < width; ++c) dst[c] += w * src[c];
    }
  }
  Parameter* tp = &table;
  return push(std::move(out),
              [tp, sel = std::move(sel)](Graph& g, NodeId self) {
                const Tensor& dout = g.grad(self);
                const std::size_t width = tp->value.cols();
                for (std::size_t b = 0; b < sel.batch_size(); ++b) {
                  const auto src = dout.row_span(b);
                  for (std::size_t e = sel.offsets[b]; e < sel.offsets[b + 1]; ++e) {
                    auto dst = tp->grad.row_span(sel.rows[e]);
                    const double w = sel.weights[e];
                    for (std::size_t c = 0; c < width; ++c) dst[c] += w * src[c];
                    tp->touch(sel.rows[e]);
                  }
                }
              },
              "lookup");
}

NodeId Graph::matmul(NodeId x, NodeId w) {
  check(x);
  check(w);
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  require(xv.cols() == wv.rows(),
          "matmul: shape mismatch " + xv.shape_string() + " * " + wv.shape_string());
  const std::size_t n = xv.rows(), k = xv.cols(), m = wv.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double a = xv(i, p);
      if (a == 0.0) continue;
      const double* wr = wv.row_span(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += a * wr[j];
    }
  }
  return push(std::move(out),
              [x, w](Graph& g, NodeId self) {
                const Tensor& dout = g.grad(self);
                const Tensor& xv = g.value(x);
                const Tensor& wv = g.value(w);
                const std::size_t n = xv.rows(), k = xv.cols(), m = wv.cols();
                Tensor& dx = g.mutable_grad(x);
                Tensor& dw = g.mutable_grad(w);
                for (std::size_t i = 0; i < n; ++i) {
                  const double* d = dout.row_span(i).data();
                  for (std::size_t p = 0; p < k; ++p) {
                    const double* wr = wv.row_span(p).data();
                    double acc = 0;
                    for (std::size_t j = 0; j < m; ++j) acc += d[j] * wr[j];
                    dx(i, p) += acc;
                    const double a = xv(i, p);
                    if (a == 0.0) continue;
                    double* dwr = &dw(p, 0);
                    for (std::size_t j = 0; j < m; ++j) dwr[j] += a * d[j];
                  }
                }
              },
              "matmul");
}

NodeId Graph::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  require(value(a).same_shape(value(b)),
          "add: shape mismatch " + value(a).shape_string() + " vs " + value(b).shape_string());
  Tensor out = value(a);
  const auto bv = value(b).values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return push(std::move(out),
              [a, b](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                auto da = g.mutable_grad(a).values();
                for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
                auto db = g.mutable_grad(b).values();
                for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i];
              },
              "add");
}

NodeId Graph::add_row(NodeId x, NodeId row) {
  check(x);
  check(row);
  const Tensor& r = value(row);
  require(r.rows() == 1 && r.cols() == value(x).cols(),
          "add_row: expected 1x" + std::to_string(value(x).cols()) + " row, got " +
              r.shape_string());
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row_span(i);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += r[c];
  }
  return push(std::move(out),
              [x, row](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                Tensor& dx = g.mutable_grad(x);
                Tensor& dr = g.mutable_grad(row);
                for (std::size_t i = 0; i < d.rows(); ++i) {
                  for (std::size_t c = 0; c < d.cols(); ++c) {
                    dx(i, c) += d(i, c);
                    dr[c] += d(i, c);
                  }
                }
              },
              "add_row");
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check(a);
  check(b);
  require(value(a).same_shape(value(b)),
          "mul: shape mismatch " + value(a).shape_string() + " vs " + value(b).shape_string());
  Tensor out = value(a);
  const auto bv = value(b).values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return push(std::move(out),
              [a, b](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                const auto av = g.value(a).values();
                const auto bv = g.value(b).values();
                auto da = g.mutable_grad(a).values();
                for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * bv[i];
                auto db = g.mutable_grad(b).values();
                for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * av[i];
              },
              "mul");
}

NodeId Graph::mul_row(NodeId x, NodeId row) {
  check(x);
  check(row);
  const Tensor& r = value(row);
  require(r.rows() == 1 && r.cols() == value(x).cols(),
          "mul_row: expected 1x" + std::to_string(value(x).cols()) + " row, got " +
              r.shape_string());
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row_span(i);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] *= r[c];
  }
  return push(std::move(out),
              [x, row](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                const Tensor& xv = g.value(x);
                const Tensor& rv = g.value(row);
                Tensor& dx = g.mutable_grad(x);
                Tensor& dr = g.mutable_grad(row);
                for (std::size_t i = 0; i < d.rows(); ++i) {
                  for (std::size_t c = 0; c < d.cols(); ++c) {
                    dx(i, c) += d(i, c) * rv[c];
                    dr[c] += d(i, c) * xv(i, c);
                  }
                }
              },
              "mul_row");
}

NodeId Graph::scale(NodeId x, double factor) {
  check(x);
  Tensor out = value(x);
  for (auto& v : out.values()) v *= factor;
  return push(std::move(out),
              [x, factor](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                auto dx = g.mutable_grad(x).values();
                for (std::size_t i = 0; i < d.size(); ++i) dx[i] += factor * d[i];
              },
              "scale");
}

NodeId Graph::sum(std::span<const NodeId> parts) {
  require(!parts.empty(), "sum: no inputs");
  for (auto p : parts) check(p);
  Tensor out = value(parts[0]);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Tensor& v = value(parts[k]);
    require(v.same_shape(out), "sum: shape mismatch " + out.shape_string() + " vs " +
                                   v.shape_string());
    auto o = out.values();
    const auto pv = v.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += pv[i];
  }
  std::vector<NodeId> inputs(parts.begin(), parts.end());
  return push(std::move(out),
              [inputs = std::move(inputs)](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                for (auto in : inputs) {
                  auto di = g.mutable_grad(in).values();
                  for (std::size_t i = 0; i < d.size(); ++i) di[i] += d[i];
                }
              },
              "sum");
}

NodeId Graph::concat(std::span<const NodeId> parts) {
  require(!parts.empty(), "concat: no inputs");
  const std::size_t batch = value(parts[0]).rows();
  std::size_t width = 0;
  for (auto p : parts) {
    check(p);
    require(value(p).rows() == batch, "concat: row count mismatch");
    width += value(p).cols();
  }
  Tensor out(batch, width);
  std::size_t col = 0;
  for (auto p : parts) {
    const Tensor& v = value(p);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, col + c) = v(i, c);
    }
    col += v.cols();
  }
  std::vector<NodeId> inputs(parts.begin(), parts.end());
  return push(std::move(out),
              [inputs = std::move(inputs)](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                std::size_t col = 0;
                for (auto in : inputs) {
                  Tensor& di = g.mutable_grad(in);
                  for (std::size_t i = 0; i < di.rows(); ++i) {
                    for (std::size_t c = 0; c < di.cols(); ++c) di(i, c) += d(i, col + c);
                  }
                  col += di.cols();
                }
              },
              "concat");
}

NodeId Graph::slice(NodeId x, std::size_t first_col, std::size_t width) {
  check(x);
  const Tensor& xv = value(x);
  require(first_col + width <= xv.cols(), "slice: columns out of range");
  Tensor out(xv.rows(), width);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t c = 0; c < width; ++c) out(i, c) = xv(i, first_col + c);
  }
  return push(std::move(out),
              [x, first_col](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                Tensor& dx = g.mutable_grad(x);
                for (std::size_t i = 0; i < d.rows(); ++i) {
                  for (std::size_t c = 0; c < d.cols(); ++c) dx(i, first_col + c) += d(i, c);
                }
              },
              "slice");
}

NodeId Graph::sum_cols(NodeId x) {
  check(x);
  const Tensor& xv = value(x);
  Tensor out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double acc = 0;
    for (double v : xv.row_span(i)) acc += v;
    out(i, 0) = acc;
  }
  return push(std::move(out),
              [x](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                Tensor& dx = g.mutable_grad(x);
                for (std::size_t i = 0; i < dx.rows(); ++i) {
                  for (auto& v : dx.row_span(i)) v += d(i, 0);
                }
              },
              "sum_cols");
}

NodeId Graph::activate(NodeId x, Activation act) {
  check(x);
  if (act == Activation::kIdentity) return x;
  Tensor out = value(x);
  const bool kinked = act == Activation::kRelu || act == Activation::kSelu;
  for (auto& v : out.values()) {
    if (kinked) kink_signature_ = (kink_signature_ ^ (v > 0 ? 1u : 2u)) * 0x100000001b3ULL;
    v = ctrkit::activate(act, v);
  }
  return push(std::move(out),
              [x, act](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                const auto xv = g.value(x).values();
                const auto yv = g.value(self).values();
                auto dx = g.mutable_grad(x).values();
                for (std::size_t i = 0; i < d.size(); ++i) {
                  dx[i] += d[i] * activation_derivative(act, xv[i], yv[i]);
                }
              },
              "activate");
}

NodeId Graph::layer_norm(NodeId x, std::size_t groups, NodeId gain, NodeId shift) {
  check(x);
  check(gain);
  check(shift);
  const Tensor& xv = value(x);
  require(groups >= 1 && xv.cols() % groups == 0, "layer_norm: width not divisible by groups");
  const std::size_t unit = xv.cols() / groups;
  require(value(gain).rows() == 1 && value(gain).cols() == unit && value(shift).rows() == 1 &&
              value(shift).cols() == unit,
          "layer_norm: gain/shift must be 1x" + std::to_string(unit));
  const std::size_t batch = xv.rows(), width = xv.cols();
  // Normalized values and per-row inverse std are kept for the backward pass.
  Tensor normalized(batch, width);
  std::vector<double> inv_std(batch);
  Tensor out(batch, width);
  const Tensor& gv = value(gain);
  const Tensor& sv = value(shift);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto row = xv.row_span(i);
    double mean = 0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(width);
    double var = 0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(width);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t c = 0; c < width; ++c) {
      normalized(i, c) = (row[c] - mean) * inv_std[i];
      out(i, c) = normalized(i, c) * gv[c % unit] + sv[c % unit];
    }
  }
  return push(std::move(out),
              [x, gain, shift, unit, normalized = std::move(normalized),
               inv_std = std::move(inv_std)](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                const Tensor& gv = g.value(gain);
                Tensor& dx = g.mutable_grad(x);
                Tensor& dg = g.mutable_grad(gain);
                Tensor& ds = g.mutable_grad(shift);
                const std::size_t width = d.cols();
                std::vector<double> dnorm(width);
                for (std::size_t i = 0; i < d.rows(); ++i) {
                  double mean_d = 0, mean_dx = 0;
                  for (std::size_t c = 0; c < width; ++c) {
                    dnorm[c] = d(i, c) * gv[c % unit];
                    dg[c % unit] += d(i, c) * normalized(i, c);
                    ds[c % unit] += d(i, c);
                    mean_d += dnorm[c];
                    mean_dx += dnorm[c] * normalized(i, c);
                  }
                  mean_d /= static_cast<double>(width);
                  mean_dx /= static_cast<double>(width);
                  for (std::size_t c = 0; c < width; ++c) {
                    dx(i, c) += inv_std[i] * (dnorm[c] - mean_d - normalized(i, c) * mean_dx);
                  }
                }
              },
              "layer_norm");
}

NodeId Graph::dropout(NodeId x, double rate) {
  check(x);
  require(rate >= 0 && rate < 1, "dropout: rate must be in [0, 1)");
  if (!training_ || rate == 0) return x;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(value(x).rows(), value(x).cols());
  for (auto& m : mask.values()) m = drop(rng_) ? 0.0 : keep_scale;
  Tensor out = value(x);
  auto ov = out.values();
  const auto mv = mask.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= mv[i];
  return push(std::move(out),
              [x, mask = std::move(mask)](Graph& g, NodeId self) {
                const auto d = g.grad(self).values();
                const auto mv = mask.values();
                auto dx = g.mutable_grad(x).values();
                for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * mv[i];
              },
              "dropout");
}

NodeId Graph::softmax(NodeId x, double temperature) {
  check(x);
  require(temperature > 0, "softmax: temperature must be positive");
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row_span(i);
    double hi = row[0];
    for (double v : row) hi = std::max(hi, v);
    double total = 0;
    for (auto& v : row) {
      v = std::exp((v - hi) / temperature);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  return push(std::move(out),
              [x, temperature](Graph& g, NodeId self) {
                const Tensor& d = g.grad(self);
                const Tensor& y = g.value(self);
                Tensor& dx = g.mutable_grad(x);
                for (std::size_t i = 0; i < d.rows(); ++i) {
                  double dot = 0;
                  for (std::size_t c = 0; c < d.cols(); ++c) dot += d(i, c) * y(i, c);
                  for (std::size_t c = 0; c < d.cols(); ++c) {
                    dx(i, c) += y(i, c) * (d(i, c) - dot) / temperature;
                  }
                }
              },
              "softmax");
}

NodeId Graph::logloss(NodeId logits, std::span<const double> labels) {
  check(logits);
  const Tensor& z = value(logits);
  require(z.cols() == 1 && z.rows() == labels.size() && !labels.empty(),
          "logloss: expected a batch x 1 logit column matching the labels");
  double total = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) total += ctrkit::logloss(z(i, 0), labels[i]);
  Tensor out(1, 1, total / static_cast<double>(z.rows()));
  std::vector<double> y(labels.begin(), labels.end());
  return push(std::move(out),
              [logits, y = std::move(y)](Graph& g, NodeId self) {
                const double upstream = g.grad(self)[0];
                const Tensor& z = g.value(logits);
                Tensor& dz = g.mutable_grad(logits);
                const double inv_batch = 1.0 / static_cast<double>(y.size());
                for (std::size_t i = 0; i < y.size(); ++i) {
                  dz(i, 0) += upstream * (sigmoid(z(i, 0)) - y[i]) * inv_batch;
                }
              },
              "logloss");
}

void Graph::backward(NodeId root) {
  check(root);
  require(value(root).size() == 1, "backward: root must be a 1x1 node");
  for (auto& n : nodes_) {
    if (!n.param) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  mutable_grad(root)[0] += 1.0;
  for (NodeId id = nodes_.size(); id-- > 0;) {
    if (nodes_[id].backward) nodes_[id].backward(*this, id);
  }
}

}  // namespace ctrkit
