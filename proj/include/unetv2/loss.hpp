#ifndef UNETV2_LOSS_HPP
#define UNETV2_LOSS_HPP

#include "unetv2/ops.hpp"

#include <stdexcept>

namespace unetv2 {

struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
};

inline constexpr double kDiceSmoothing = 1.0;

/// bce * mean BCE-with-logits + dice * (1 - soft Dice), the soft Dice being
/// averaged over the images of the batch. Logits and target are (N, 1, H, W).
template <typename T>
Var<T> dice_bce_loss(Var<T> logits, Var<T> target, LossWeights weights = {}) {
  if (logits.shape() != target.shape() || logits.shape().size() != 4) {
    throw std::invalid_argument("dice_bce_loss: logits " + to_string(logits.shape()) + " and target " +
                                to_string(target.shape()) + " must be equal (N, 1, H, W)");
  }
  for (T v : target.value().values()) {
    if (v != T{0} && v != T{1}) throw std::invalid_argument("dice_bce_loss: target values must be 0 or 1");
  }
  const T smooth = static_cast<T>(kDiceSmoothing);
  Var<T> bce = mean_all(bce_with_logits(logits, target));
  Var<T> prob = sigmoid(logits);
  Var<T> overlap = reduce_sum(hadamard(prob, target), {1, 2, 3});
  Var<T> total = add(reduce_sum(prob, {1, 2, 3}), reduce_sum(target, {1, 2, 3}));
  Var<T> dice = mean_all(divide(add_scalar(scale(overlap, T{2}), smooth), add_scalar(total, smooth)));
  Var<T> dice_loss = add_scalar(scale(dice, T{-1}), T{1});
  return add(scale(bce, static_cast<T>(weights.bce)), scale(dice_loss, static_cast<T>(weights.dice)));
}

}  // namespace unetv2

#endif  // UNETV2_LOSS_HPP
