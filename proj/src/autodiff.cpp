#include "acort/autodiff.hpp"

#include <atomic>
#include <cmath>

namespace acort {

namespace {

std::atomic<std::uint64_t> next_parameter_id{1};

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("op on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::invalid_argument("op mixes Vars from different graphs");
  return graph_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void accumulate(Tensor& into, const Tensor& from) {
  auto dst = into.data();
  auto src = from.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Parameter::Parameter(std::string name, Tensor value)
    : id_(next_parameter_id.fetch_add(1)), name_(std::move(name)), value_(std::move(value)), grad_(value_.shape()) {}

void Parameter::zero_grad() {
  grad_.fill(0.0);
  pending_ = false;
}

ParameterPtr make_parameter(std::string name, Tensor value) {
  return std::make_shared<Parameter>(std::move(name), std::move(value));
}

const Tensor& Var::value() const { return graph_->value_of(index_); }

Tensor Var::grad() const {
  if (graph_->has_grad(index_)) return const_cast<Graph*>(graph_)->grad_of(index_);
  return Tensor(value().shape());
}

Mask Mask::causal(std::size_t n) {
  Mask m;
  m.rows = n;
  m.cols = n;
  m.allowed.assign(n * n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c <= r; ++c) m.allowed[r * n + c] = 1;
  }
  return m;
}

Mask Mask::row(std::vector<unsigned char> allowed) {
  Mask m;
  m.rows = 1;
  m.cols = allowed.size();
  m.allowed = std::move(allowed);
  return m;
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value in constant");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const ParameterPtr& p) {
  if (!p) throw std::invalid_argument("null parameter");
  auto it = param_nodes_.find(p->id());
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.value = p->value();
  node.param = p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(p->id(), nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) throw NonFiniteError(std::string("non-finite value in ") + op);
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph() != this) throw std::invalid_argument(std::string(op) + ": input from another graph");
    node.requires_grad = node.requires_grad || nodes_[in.index()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_of(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.shape().empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::invalid_argument("backward: loss from another graph");
  if (nodes_[loss.index()].value.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (backward_done_) throw std::logic_error("stale gradients");
  for (const auto& [id, idx] : param_nodes_) {
    if (nodes_[idx].param->has_pending_grad()) throw std::logic_error("stale gradients");
  }
  backward_done_ = true;
  grad_of(loss.index()).fill(1.0);
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.shape().empty()) continue;
    if (n.param) {
      accumulate(n.param->grad_, n.grad);
      n.param->pending_ = true;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    if (g.requires_grad(a.index())) kernels::gemm(dy, false, g.value_of(b.index()), true, g.grad_of(a.index()), true);
    if (g.requires_grad(b.index())) kernels::gemm(g.value_of(a.index()), true, dy, false, g.grad_of(b.index()), true);
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  Tensor out = kernels::matmul_nt(a.value(), b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    // y = a b^T: da = dy b, db = dy^T a
    if (g.requires_grad(a.index())) kernels::gemm(dy, false, g.value_of(b.index()), false, g.grad_of(a.index()), true);
    if (g.requires_grad(b.index())) kernels::gemm(dy, true, g.value_of(a.index()), false, g.grad_of(b.index()), true);
  }, "matmul_nt");
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  accumulate(out, b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    if (g.requires_grad(a.index())) accumulate(g.grad_of(a.index()), dy);
    if (g.requires_grad(b.index())) accumulate(g.grad_of(b.index()), dy);
  }, "add");
}

Var add_row(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  Tensor out = x.value();
  kernels::add_row_inplace(out, bias.value());
  return g.record(std::move(out), {x, bias}, [x, bias](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    if (g.requires_grad(x.index())) accumulate(g.grad_of(x.index()), dy);
    if (g.requires_grad(bias.index())) {
      Tensor& db = g.grad_of(bias.index());
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
      }
    }
  }, "add_row");
}

Var affine(Var x, Var w, std::optional<Var> b) {
  Var y = matmul(x, w);
  return b ? add_row(y, *b) : y;
}

Var scale(Var x, double factor) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return g.record(std::move(out), {x}, [x, factor](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  }, "scale");
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  kernels::relu_inplace(out);
  return g.record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    const Tensor& in = g.value_of(x.index());
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (in[i] > 0.0) dx[i] += dy[i];
    }
  }, "relu");
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  Graph& g = graph_of(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = keep(rng) ? keep_scale : 0.0;
    out[i] *= (*mask)[i];
  }
  return g.record(std::move(out), {x}, [x, mask](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += (*mask)[i] * dy[i];
  }, "dropout");
}

Var layer_normalize(Var x, Var gain, Var shift, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, shift);
  auto mean = std::make_shared<std::vector<double>>();
  auto inv_std = std::make_shared<std::vector<double>>();
  Tensor out = kernels::layer_norm(x.value(), gain.value(), shift.value(), eps, mean.get(), inv_std.get());
  return g.record(std::move(out), {x, gain, shift}, [x, gain, shift, mean, inv_std](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    const Tensor& in = g.value_of(x.index());
    const Tensor& gv = g.value_of(gain.index());
    const std::size_t n = in.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < in.rows(); ++r) {
      auto xr = in.row(r);
      auto dyr = dy.row(r);
      const double mu = (*mean)[r];
      const double istd = (*inv_std)[r];
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        xhat[c] = (xr[c] - mu) * istd;
        dxhat[c] = dyr[c] * gv[c];
        sum_dxhat += dxhat[c];
        sum_dxhat_xhat += dxhat[c] * xhat[c];
      }
      if (g.requires_grad(x.index())) {
        auto dx = g.grad_of(x.index()).row(r);
        for (std::size_t c = 0; c < n; ++c) {
          dx[c] += istd * (dxhat[c] - inv_n * sum_dxhat - xhat[c] * inv_n * sum_dxhat_xhat);
        }
      }
      if (g.requires_grad(gain.index())) {
        Tensor& dg = g.grad_of(gain.index());
        for (std::size_t c = 0; c < n; ++c) dg[c] += dyr[c] * xhat[c];
      }
      if (g.requires_grad(shift.index())) {
        Tensor& db = g.grad_of(shift.index());
        for (std::size_t c = 0; c < n; ++c) db[c] += dyr[c];
      }
    }
  }, "layer_normalize");
}

Var masked_softmax(Var logits, const Mask* mask) {
  Graph& g = graph_of(logits);
  const Tensor& in = logits.value();
  std::span<const unsigned char> allowed;
  std::size_t mask_rows = 0;
  if (mask) {
    if (mask->cols != in.cols() || (mask->rows != 1 && mask->rows != in.rows()) ||
        mask->allowed.size() != mask->rows * mask->cols) {
      throw std::invalid_argument("masked_softmax: mask shape does not broadcast to logits");
    }
    allowed = mask->allowed;
    mask_rows = mask->rows;
  }
  Tensor out = kernels::softmax_rows(in, allowed, mask_rows);
  return g.record(std::move(out), {logits}, [logits](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    const Tensor& p = g.value_of(self);
    Tensor& dx = g.grad_of(logits.index());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto pr = p.row(r);
      auto dyr = dy.row(r);
      auto dxr = dx.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < pr.size(); ++c) dot += pr[c] * dyr[c];
      for (std::size_t c = 0; c < pr.size(); ++c) dxr[c] += pr[c] * (dyr[c] - dot);
    }
  }, "masked_softmax");
}

Var log_clamped(Var x, double floor) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::log(std::max(v, floor));
  return g.record(std::move(out), {x}, [x, floor](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    const Tensor& in = g.value_of(x.index());
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (in[i] > floor) dx[i] += dy[i] / in[i];
    }
  }, "log_clamped");
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = graph_of(x);
  const Tensor& in = x.value();
  if (begin + count > in.cols()) throw std::invalid_argument("slice_cols: range exceeds width");
  Tensor out({in.rows(), count});
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto src = in.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return g.record(std::move(out), {x}, [x, begin, count](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      auto src = dy.row(r);
      auto dst = dx.row(r).subspan(begin, count);
      for (std::size_t c = 0; c < count; ++c) dst[c] += src[c];
    }
  }, "slice_cols");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t width = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.value().rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    width += p.value().cols();
  }
  Tensor out({rows, width});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = v.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Graph::BackwardFn fn = [inputs](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = g.value_of(p.index()).cols();
      if (g.requires_grad(p.index())) {
        Tensor& dx = g.grad_of(p.index());
        for (std::size_t r = 0; r < dy.rows(); ++r) {
          auto src = dy.row(r).subspan(off, w);
          auto dst = dx.row(r);
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
      }
      off += w;
    }
  };
  return g.record(std::move(out), parts, std::move(fn), "concat_cols");
}

Var gather_rows(Var table, std::span<const int> rows) {
  Graph& g = graph_of(table);
  const Tensor& t = table.value();
  Tensor out({rows.size(), t.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= t.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    }
    auto src = t.row(static_cast<std::size_t>(rows[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return g.record(std::move(out), {table}, [table, idx](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    Tensor& dt = g.grad_of(table.index());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = dy.row(i);
      auto dst = dt.row(static_cast<std::size_t>(idx[i]));
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  }, "gather_rows");
}

Var column_as_matrix(Var x, std::size_t col, std::size_t rows, std::size_t cols) {
  Graph& g = graph_of(x);
  const Tensor& in = x.value();
  if (in.rows() != rows * cols || col >= in.cols()) throw std::invalid_argument("column_as_matrix: shape mismatch");
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows * cols; ++i) out[i] = in.at(i, col);
  return g.record(std::move(out), {x}, [x, col](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad_of(self);
    Tensor& dx = g.grad_of(x.index());
    for (std::size_t i = 0; i < dy.size(); ++i) dx.at(i, col) += dy[i];
  }, "column_as_matrix");
}

Var cross_entropy(Var logits, std::span<const int> targets, int ignore_index) {
  Graph& g = graph_of(logits);
  const Tensor& in = logits.value();
  if (targets.size() != in.rows()) throw std::invalid_argument("cross_entropy: one target per row required");
  const std::size_t v = in.cols();
  auto log_probs = std::make_shared<Tensor>(in.shape());
  std::size_t counted = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    kernels::log_softmax_row(in.row(r), log_probs->row(r));
    const int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " out of range");
    }
    total -= log_probs->at(r, static_cast<std::size_t>(t));
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy: all positions ignored");
  Tensor out({1}, {total / static_cast<double>(counted)});
  std::vector<int> tgt(targets.begin(), targets.end());
  return g.record(std::move(out), {logits}, [logits, log_probs, tgt, ignore_index, counted](Graph& g, std::size_t self) {
    const double dy = g.grad_of(self)[0] / static_cast<double>(counted);
    Tensor& dx = g.grad_of(logits.index());
    for (std::size_t r = 0; r < tgt.size(); ++r) {
      if (tgt[r] == ignore_index) continue;
      auto lp = log_probs->row(r);
      auto dxr = dx.row(r);
      for (std::size_t c = 0; c < lp.size(); ++c) dxr[c] += dy * std::exp(lp[c]);
      dxr[static_cast<std::size_t>(tgt[r])] -= dy;
    }
  }, "cross_entropy");
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return g.record(Tensor({1}, {total}), {x}, [x](Graph& g, std::size_t self) {
    const double dy = g.grad_of(self)[0];
    for (auto& v : g.grad_of(x.index()).data()) v += dy;
  }, "sum");
}

}  // namespace acort
