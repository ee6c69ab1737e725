#pragma once

#include <vector>

#include "acort/autodiff.hpp"

namespace acort {

/// Linear warmup then inverse-sqrt decay:
/// lr(s) = peak * min(s / warmup, sqrt(warmup / s)), steps counted from 1.
class NoamSchedule {
 public:
  NoamSchedule(double peak, int warmup_steps);

  /// The classic transformer peak, hidden^-1/2 * warmup^-1/2.
  static double default_peak(int hidden_size, int warmup_steps);

  double rate(int step) const;
  double peak() const { return peak_; }
  int warmup_steps() const { return warmup_; }

 private:
  double peak_;
  int warmup_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// Adam over a fixed list of distinct parameters. step() consumes the
/// pending gradients and zeroes them.
class Adam {
 public:
  explicit Adam(std::vector<ParameterPtr> params, AdamOptions options = {});

  void step(double learning_rate);
  int steps() const { return steps_; }
  void zero_grad();

 private:
  std::vector<ParameterPtr> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  AdamOptions options_;
  int steps_ = 0;
};

}  // namespace acort
