#ifndef UNETV2_NN_HPP
#define UNETV2_NN_HPP

#include "unetv2/autograd.hpp"
#include "unetv2/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace unetv2 {

struct Extent2 {
  std::size_t h, w;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

/// Convolution weights and geometry. Weight is (C_out, C_in, k, k).
template <typename T>
struct Conv2dParams {
  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weight.value.extent(0); }
  std::size_t in_channels() const { return weight.value.extent(1); }
  std::size_t kernel() const { return weight.value.extent(2); }

  /// Fan-in scaled uniform weights U(-a/sqrt(fan_in), a/sqrt(fan_in)); zero bias.
  static Conv2dParams create(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                             std::size_t stride, std::size_t padding, bool with_bias, Rng& rng, double gain = 1.0);

  std::vector<Parameter<T>*> parameters();
};

/// Spatial and channel gates of one pyramid level.
template <typename T>
struct AttentionParams {
  Parameter<T> mlp_in;   // (C, C/r)
  Parameter<T> mlp_out;  // (C/r, C)
  Conv2dParams<T> spatial;  // 7x7, 2 -> 1, pad 3, with bias

  std::size_t channels() const { return mlp_in.value.extent(0); }
  std::size_t hidden() const { return mlp_in.value.extent(1); }

  static AttentionParams create(const std::string& name, std::size_t channels, Rng& rng);

  std::vector<Parameter<T>*> parameters();
};

/// Reduction ratio for a channel-attention MLP on `channels` inputs:
/// the largest divisor of `channels` not above 16.
std::size_t attention_reduction(std::size_t channels);
/// Parameter count of AttentionParams over `channels`.
std::size_t attention_param_count(std::size_t channels);
/// Largest divisor of `channels` not above `preferred`.
std::size_t group_count(std::size_t channels, std::size_t preferred = 8);

/// Cross-correlation via im2col and a matrix product.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding);
template <typename T>
Var<T> conv2d(Var<T> x, Conv2dParams<T>& p);

template <typename T>
Var<T> max_pool2d(Var<T> x);
template <typename T>
Var<T> adaptive_avg_pool2d(Var<T> x, Extent2 out);
/// Half-pixel-center bilinear resampling with edge clamping.
template <typename T>
Var<T> bilinear_resize(Var<T> x, Extent2 out);
/// Per-sample, per-group standardization (eps 1e-5) then per-channel affine.
template <typename T>
Var<T> group_norm(Var<T> x, std::size_t groups, Var<T> gamma, Var<T> beta);

template <typename T>
Var<T> channel_attention(Var<T> x, AttentionParams<T>& p);
template <typename T>
Var<T> spatial_attention(Var<T> x, AttentionParams<T>& p);

inline constexpr double kGroupNormEps = 1e-5;

namespace kernels {

// Graph-free forward kernels, shared with image loading.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, Extent2 out);
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, Extent2 out);

}  // namespace kernels

}  // namespace unetv2

#endif  // UNETV2_NN_HPP
