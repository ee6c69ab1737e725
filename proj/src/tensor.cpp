#include "acort/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace acort {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), std::vector<double>(data)) {}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) n *= shape_[i];
  return n;
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace kernels {

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out, bool accumulate) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb) {
    throw std::invalid_argument("gemm: inner dimensions differ (" + std::to_string(k) + " vs " + std::to_string(kb) +
                                ")");
  }
  if (out.rows() != m || out.cols() != n) throw std::invalid_argument("gemm: output shape mismatch");
  auto A = as_matrix(a);
  auto B = as_matrix(b);
  auto C = as_matrix(out);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += A * B;
  } else if (!trans_a && trans_b) {
    C.noalias() += A * B.transpose();
  } else if (trans_a && !trans_b) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  gemm(a, false, b, false, out, false);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.rows()});
  gemm(a, false, b, true, out, false);
  return out;
}

void add_row_inplace(Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) throw std::invalid_argument("bias width does not match input");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps, std::vector<double>* mean,
                  std::vector<double>* inv_std) {
  const std::size_t n = x.cols();
  if (gain.size() != n || shift.size() != n) throw std::invalid_argument("layer_norm: gain/shift width mismatch");
  Tensor out(x.shape());
  if (mean) mean->assign(x.rows(), 0.0);
  if (inv_std) inv_std->assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) o[c] = (in[c] - mu) * istd * gain[c] + shift[c];
    if (mean) (*mean)[r] = mu;
    if (inv_std) (*inv_std)[r] = istd;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits, std::span<const unsigned char> allowed, std::size_t mask_rows) {
  const std::size_t cols = logits.cols();
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const unsigned char* mask = nullptr;
    if (!allowed.empty()) mask = allowed.data() + (mask_rows == 1 ? 0 : r) * cols;
    auto in = logits.row(r);
    auto o = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask || mask[c]) mx = std::max(mx, in[c]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) throw std::invalid_argument("no attendable position");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = (!mask || mask[c]) ? std::exp(in[c] - mx) : 0.0;
      total += o[c];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

void log_softmax_row(std::span<const double> logits, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

}  // namespace kernels

}  // namespace acort
