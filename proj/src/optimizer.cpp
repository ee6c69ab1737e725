#include "acort/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace acort {

NoamSchedule::NoamSchedule(double peak, int warmup_steps) : peak_(peak), warmup_(warmup_steps) {
  if (!(peak > 0.0)) throw std::invalid_argument("learning-rate peak must be positive");
  if (warmup_steps < 1) throw std::invalid_argument("warmup must be at least one step");
}

double NoamSchedule::default_peak(int hidden_size, int warmup_steps) {
  return 1.0 / std::sqrt(static_cast<double>(hidden_size) * static_cast<double>(warmup_steps));
}

double NoamSchedule::rate(int step) const {
  const double s = static_cast<double>(std::max(step, 1));
  const double w = static_cast<double>(warmup_);
  return peak_ * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(std::vector<ParameterPtr> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  std::unordered_set<std::uint64_t> seen;
  for (const auto& p : params_) {
    if (!seen.insert(p->id()).second) throw std::invalid_argument("Adam: parameter '" + p->name() + "' listed twice");
    first_.emplace_back(p->value().shape());
    second_.emplace_back(p->value().shape());
  }
}

void Adam::step(double learning_rate) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, steps_);
  const double bc2 = 1.0 - std::pow(options_.beta2, steps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    auto value = p.value().data();
    auto grad = p.grad().data();
    auto m = first_[i].data();
    auto v = second_[i].data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * grad[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * grad[k] * grad[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= learning_rate * mhat / (std::sqrt(vhat) + options_.eps);
    }
    p.zero_grad();
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace acort
