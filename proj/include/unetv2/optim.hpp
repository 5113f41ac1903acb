#ifndef UNETV2_OPTIM_HPP
#define UNETV2_OPTIM_HPP

#include "unetv2/autograd.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unetv2 {

/// lr0 * (1 - step/total)^power
inline double poly_lr(std::size_t step, std::size_t total, double lr0, double power) {
  if (total == 0) throw std::invalid_argument("poly_lr: total steps must be positive");
  if (step > total) {
    throw std::out_of_range("poly_lr: step " + std::to_string(step) + " beyond schedule length " +
                            std::to_string(total));
  }
  const double remaining = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return lr0 * std::pow(remaining, power);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers bind to the registry passed to
/// the first `step`; later calls must pass the same shapes in the same order.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {
    if (!(config.beta1 >= 0 && config.beta1 < 1 && config.beta2 >= 0 && config.beta2 < 1)) {
      throw std::invalid_argument("adam: betas must lie in [0, 1)");
    }
  }

  void step(std::span<Parameter<T>* const> params, double lr) {
    if (first_.empty()) {
      for (const auto* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
    }
    if (params.size() != first_.size()) throw std::invalid_argument("adam: registry size changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = *params[i];
      if (p.value.shape() != first_[i].shape() || p.grad.shape() != p.value.shape()) {
        throw std::invalid_argument("adam: gradient of '" + p.name + "' does not match its moment buffers");
      }
      if (!p.grad.all_finite()) throw std::domain_error("adam: non-finite gradient in parameter '" + p.name + "'");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const T g = p.grad[k];
        m[k] = b1 * m[k] + (T{1} - b1) * g;
        v[k] = b2 * v[k] + (T{1} - b2) * g * g;
        const double m_hat = static_cast<double>(m[k]) / c1;
        const double v_hat = static_cast<double>(v[k]) / c2;
        p.value[k] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + config_.eps));
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return first_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return second_; }

 private:
  AdamConfig config_;
  std::vector<Tensor<T>> first_, second_;
  std::size_t t_ = 0;
};

}  // namespace unetv2

#endif  // UNETV2_OPTIM_HPP
