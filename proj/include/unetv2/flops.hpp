#ifndef UNETV2_FLOPS_HPP
#define UNETV2_FLOPS_HPP

#include <cstdint>

// Closed-form floating-point operation counts. One multiply-add counts as
// two FLOPs; comparisons count as one. Data movement (concat, reshape,
// expand, identity) is free.
namespace unetv2::flops {

using Count = std::uint64_t;

/// 2*C_in*k*k per output element, plus one add per output when biased.
constexpr Count conv2d(Count n, Count cin, Count cout, Count k, Count ho, Count wo, bool bias) {
  return n * cout * ho * wo * (2 * cin * k * k + (bias ? 1 : 0));
}

constexpr Count matmul(Count m, Count k, Count n) { return 2 * m * k * n; }

constexpr Count elementwise(Count elements) { return elements; }
constexpr Count relu(Count elements) { return elements; }
/// negate, exp, add, divide
constexpr Count sigmoid(Count elements) { return 4 * elements; }

/// mean (1), centered square accumulate (3), normalize (2), affine (2)
constexpr Count group_norm(Count elements) { return 8 * elements; }

/// three comparisons per 2x2 window
constexpr Count max_pool2d(Count outputs) { return 3 * outputs; }

/// one add per covered input element and one divide per output
constexpr Count adaptive_avg_pool2d(Count covered_inputs, Count outputs) { return covered_inputs + outputs; }

/// two horizontal lerps and one vertical lerp, 4 multiplies and 3 adds
constexpr Count bilinear_resize(Count outputs) { return 7 * outputs; }

/// one add per input and one divide per output
constexpr Count reduce_mean(Count inputs, Count outputs) { return inputs + outputs; }
constexpr Count reduce_max(Count inputs) { return inputs; }

}  // namespace unetv2::flops

#endif  // UNETV2_FLOPS_HPP
