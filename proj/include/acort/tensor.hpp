#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace acort {

using Shape = std::vector<std::size_t>;

/// Dense row-major f64 tensor. Ops treat every tensor as a matrix of
/// rows() x cols(), where cols() is the last dimension.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, std::initializer_list<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Plain forward kernels shared by the autodiff ops and the inference path.
namespace kernels {

/// out (+)= op(a) * op(b) where op transposes when the flag is set.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

void add_row_inplace(Tensor& x, const Tensor& bias);
void relu_inplace(Tensor& x);

/// Normalizes each row; fills per-row mean and inverse std when requested.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps,
                  std::vector<double>* mean = nullptr, std::vector<double>* inv_std = nullptr);

/// Row softmax with max subtraction. `allowed` is rows x cols, 1 x cols
/// (broadcast) or empty.
Tensor softmax_rows(const Tensor& logits, std::span<const unsigned char> allowed, std::size_t mask_rows);

void log_softmax_row(std::span<const double> logits, std::span<double> out);

}  // namespace kernels

}  // namespace acort
