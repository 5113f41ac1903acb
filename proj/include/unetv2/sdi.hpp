#ifndef UNETV2_SDI_HPP
#define UNETV2_SDI_HPP

#include "unetv2/nn.hpp"

#include <span>
#include <vector>

namespace unetv2 {

/// Encoder outputs, finest level first. Level i+1 has exactly half the
/// height and width of level i; all levels share the batch extent.
template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;

  std::size_t size() const { return levels.size(); }
  Var<T>& operator[](std::size_t i) { return levels[i]; }
  const Var<T>& operator[](std::size_t i) const { return levels[i]; }

  Extent2 extent(std::size_t i) const {
    const Dims4 d = Dims4::of(levels.at(i).shape());
    return {d.h, d.w};
  }

  /// Throws unless the halving and shared-batch laws hold.
  void validate(std::size_t min_levels = 1) const;
};

struct SdiConfig {
  std::vector<std::size_t> in_channels;  // C_i per level
  std::size_t fusion_channels = 32;      // c
  bool attention = true;                 // spatial + channel gates before projection
  bool shared_smoothing = false;         // one smoothing kernel per target level instead of M*M

  std::size_t levels() const { return in_channels.size(); }
};

template <typename T>
struct SdiParams {
  SdiConfig config;
  std::vector<AttentionParams<T>> attention;  // empty when config.attention is off
  std::vector<Conv2dParams<T>> projection;    // 1x1, C_i -> c
  std::vector<Conv2dParams<T>> smoothing;     // 3x3 pad 1, c -> c; row-major (target, source)

  static SdiParams create(const SdiConfig& config, Rng& rng, const std::string& prefix = "sdi");

  std::size_t levels() const { return config.levels(); }
  std::size_t fusion_channels() const { return config.fusion_channels; }
  Conv2dParams<T>& smoothing_kernel(std::size_t target, std::size_t source);

  std::vector<Parameter<T>*> parameters();
};

/// Closed-form parameter count of SdiParams built from `config`.
std::size_t sdi_param_count(const SdiConfig& config);

/// Gates each level (spatial, then channel) and projects it to c channels.
template <typename T>
FeaturePyramid<T> attend_and_project(const FeaturePyramid<T>& features, SdiParams<T>& p);

/// Brings level `source` to the resolution of level `target` (0-based, both
/// below `levels`): average pooling from finer levels, identity on the
/// diagonal, bilinear upsampling from coarser levels.
template <typename T>
Var<T> resize_to_level(Var<T> feature, std::size_t target, std::size_t source, std::size_t levels, Extent2 extent);

template <typename T>
Var<T> smooth(Var<T> feature, Conv2dParams<T>& kernel);

/// Left-to-right Hadamard product of one row of aligned maps.
template <typename T>
Var<T> fuse(std::span<const Var<T>> row);

/// Full module: one refined (N, c, H_i, W_i) map per level.
template <typename T>
FeaturePyramid<T> sdi_forward(const FeaturePyramid<T>& features, SdiParams<T>& p);

}  // namespace unetv2

#endif  // UNETV2_SDI_HPP
