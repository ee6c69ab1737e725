#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "acort/tensor.hpp"

namespace acort {

/// Raised when a forward op produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trainable tensor with identity. Sharing a layer means referencing the
/// same Parameter from several places in the model.
class Parameter {
 public:
  Parameter(std::string name, Tensor value);

  std::uint64_t id() const { return id_; }
  const std::string& name() const { return name_; }
  const Tensor& value() const { return value_; }
  Tensor& value() { return value_; }
  const Tensor& grad() const { return grad_; }
  Tensor& grad() { return grad_; }
  std::size_t size() const { return value_.size(); }

  /// True between a backward pass that reached this parameter and zero_grad().
  bool has_pending_grad() const { return pending_; }
  void zero_grad();

 private:
  friend class Graph;
  std::uint64_t id_;
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool pending_ = false;
};

using ParameterPtr = std::shared_ptr<Parameter>;

ParameterPtr make_parameter(std::string name, Tensor value);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient accumulated by the last backward pass (zeros if unreached).
  Tensor grad() const;
  std::size_t index() const { return index_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

  bool operator==(const Var&) const = default;

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t index) : graph_(graph), index_(index) {}
  Graph* graph_ = nullptr;
  std::size_t index_ = 0;
};

/// Boolean attention mask, either rows x cols or a single broadcast row.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> allowed;

  static Mask causal(std::size_t n);
  static Mask row(std::vector<unsigned char> allowed);
};

/// Tape of dense ops with reverse-mode differentiation. Nodes are appended
/// in execution order, so the tape is always topologically sorted.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf for `p`. Repeated calls return the same node.
  Var param(const ParameterPtr& p);

  /// Accumulates d(loss)/d(p) into every reachable Parameter's grad. A
  /// second call, or a call while a parameter still holds an unconsumed
  /// gradient, throws "stale gradients".
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op construction interface.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward, const char* op);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward), op);
  }
  const Tensor& value_of(std::size_t node) const { return nodes_[node].value; }
  bool requires_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  /// Zero-initialized on first use.
  Tensor& grad_of(std::size_t node);
  bool has_grad(std::size_t node) const { return !nodes_[node].grad.shape().empty(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    ParameterPtr param;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// Differentiable ops. All inputs must belong to the same graph.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// Adds a length-cols bias to every row.
Var add_row(Var x, Var bias);
Var affine(Var x, Var w, std::optional<Var> b = std::nullopt);
Var scale(Var x, double factor);
Var relu(Var x);
/// Inverted dropout: each entry is zeroed with probability `rate`, survivors
/// are scaled by 1 / (1 - rate). Returns `x` itself when rate is 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);
Var layer_normalize(Var x, Var gain, Var shift, double eps = 1e-5);
/// Row softmax; masked positions get probability 0. A row with nothing
/// allowed throws "no attendable position".
Var masked_softmax(Var logits, const Mask* mask = nullptr);
/// log(max(x, floor)); gradient is zero where clamped.
Var log_clamped(Var x, double floor);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const int> rows);
/// Column `col` of x reshaped row-major to rows x cols.
Var column_as_matrix(Var x, std::size_t col, std::size_t rows, std::size_t cols);
/// Mean negative log-likelihood over targets != ignore_index.
Var cross_entropy(Var logits, std::span<const int> targets, int ignore_index = -1);
Var sum(Var x);

}  // namespace acort
