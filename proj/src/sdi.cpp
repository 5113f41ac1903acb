#include "unetv2/sdi.hpp"

#include "unetv2/ops.hpp"

#include <stdexcept>

namespace unetv2 {

template <typename T>
void FeaturePyramid<T>::validate(std::size_t min_levels) const {
  if (levels.size() < min_levels) {
    throw std::invalid_argument("feature pyramid: " + std::to_string(levels.size()) + " levels, need at least " +
                                std::to_string(min_levels));
  }
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const Dims4 d = Dims4::of(levels[i].shape());
    if (i == 0) continue;
    const Dims4 prev = Dims4::of(levels[i - 1].shape());
    if (d.n != prev.n) throw std::invalid_argument("feature pyramid: batch extent differs between levels");
    if (prev.h != 2 * d.h || prev.w != 2 * d.w) {
      throw std::invalid_argument("feature pyramid: level " + std::to_string(i) + " is " + to_string(d.shape()) +
                                  ", expected half the resolution of " + to_string(prev.shape()));
    }
  }
}

std::size_t sdi_param_count(const SdiConfig& config) {
  const std::size_t m = config.levels();
  const std::size_t c = config.fusion_channels;
  std::size_t total = 0;
  for (std::size_t ci : config.in_channels) {
    if (config.attention) total += attention_param_count(ci);
    total += ci * c + c;
  }
  const std::size_t kernels = config.shared_smoothing ? m : m * m;
  return total + kernels * (9 * c * c + c);
}

template <typename T>
SdiParams<T> SdiParams<T>::create(const SdiConfig& config, Rng& rng, const std::string& prefix) {
  if (config.levels() == 0 || config.fusion_channels == 0) {
    throw std::invalid_argument("sdi: need at least one level and a positive fusion width");
  }
  SdiParams p;
  p.config = config;
  const std::size_t m = config.levels();
  const std::size_t c = config.fusion_channels;
  for (std::size_t i = 0; i < m; ++i) {
    const std::string level = prefix + ".level" + std::to_string(i);
    if (config.attention) p.attention.push_back(AttentionParams<T>::create(level + ".attn", config.in_channels[i], rng));
    p.projection.push_back(Conv2dParams<T>::create(level + ".proj", config.in_channels[i], c, 1, 1, 0, true, rng));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < (config.shared_smoothing ? 1 : m); ++j) {
      const std::string name = config.shared_smoothing
                                   ? prefix + ".smooth" + std::to_string(i)
                                   : prefix + ".smooth" + std::to_string(i) + "_" + std::to_string(j);
      p.smoothing.push_back(Conv2dParams<T>::create(name, c, c, 3, 1, 1, true, rng));
    }
  }
  return p;
}

template <typename T>
Conv2dParams<T>& SdiParams<T>::smoothing_kernel(std::size_t target, std::size_t source) {
  const std::size_t m = levels();
  if (target >= m || source >= m) throw std::out_of_range("sdi: smoothing kernel index out of range");
  return config.shared_smoothing ? smoothing[target] : smoothing[target * m + source];
}

template <typename T>
std::vector<Parameter<T>*> SdiParams<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto append = [&out](auto&& ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto& a : attention) append(a.parameters());
  for (auto& c : projection) append(c.parameters());
  for (auto& c : smoothing) append(c.parameters());
  return out;
}

template <typename T>
FeaturePyramid<T> attend_and_project(const FeaturePyramid<T>& features, SdiParams<T>& p) {
  if (features.size() != p.levels()) {
    throw std::invalid_argument("sdi: pyramid has " + std::to_string(features.size()) + " levels, parameters " +
                                std::to_string(p.levels()));
  }
  FeaturePyramid<T> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    Var<T> f = features[i];
    const std::size_t channels = Dims4::of(f.shape()).c;
    if (channels != p.config.in_channels[i]) {
      throw std::invalid_argument("sdi: level " + std::to_string(i) + " has " + std::to_string(channels) +
                                  " channels, parameters expect " + std::to_string(p.config.in_channels[i]));
    }
    if (p.config.attention) {
      f = spatial_attention(f, p.attention[i]);
      f = channel_attention(f, p.attention[i]);
    }
    out.levels.push_back(conv2d(f, p.projection[i]));
  }
  return out;
}

template <typename T>
Var<T> resize_to_level(Var<T> feature, std::size_t target, std::size_t source, std::size_t levels, Extent2 extent) {
  if (target >= levels || source >= levels) {
    throw std::out_of_range("resize_to_level: level indices (" + std::to_string(target) + ", " +
                            std::to_string(source) + ") outside [0, " + std::to_string(levels) + ")");
  }
  if (source < target) return adaptive_avg_pool2d(feature, extent);
  if (source > target) return bilinear_resize(feature, extent);
  return feature;
}

template <typename T>
Var<T> smooth(Var<T> feature, Conv2dParams<T>& kernel) {
  const std::size_t c = Dims4::of(feature.shape()).c;
  if (kernel.kernel() != 3 || kernel.padding != 1 || kernel.stride != 1 || kernel.in_channels() != c ||
      kernel.out_channels() != c) {
    throw std::invalid_argument("smooth: expected a 3x3, pad 1, stride 1 kernel mapping " + std::to_string(c) +
                                " -> " + std::to_string(c) + " channels");
  }
  return conv2d(feature, kernel);
}

template <typename T>
Var<T> fuse(std::span<const Var<T>> row) {
  if (row.empty()) throw std::invalid_argument("fuse: empty row");
  Var<T> acc = row[0];
  for (std::size_t j = 1; j < row.size(); ++j) acc = hadamard(acc, row[j]);
  return acc;
}

template <typename T>
FeaturePyramid<T> sdi_forward(const FeaturePyramid<T>& features, SdiParams<T>& p) {
  features.validate(1);
  const FeaturePyramid<T> projected = attend_and_project(features, p);
  const std::size_t m = projected.size();
  FeaturePyramid<T> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Var<T>> row;
    for (std::size_t j = 0; j < m; ++j) {
      Var<T> aligned = resize_to_level(projected[j], i, j, m, projected.extent(i));
      row.push_back(smooth(aligned, p.smoothing_kernel(i, j)));
    }
    out.levels.push_back(fuse<T>(row));
  }
  return out;
}

#define UNETV2_INSTANTIATE_SDI(T)                                                          \
  template struct FeaturePyramid<T>;                                                       \
  template struct SdiParams<T>;                                                            \
  template FeaturePyramid<T> attend_and_project(const FeaturePyramid<T>&, SdiParams<T>&);  \
  template Var<T> resize_to_level(Var<T>, std::size_t, std::size_t, std::size_t, Extent2); \
  template Var<T> smooth(Var<T>, Conv2dParams<T>&);                                        \
  template Var<T> fuse(std::span<const Var<T>>);                                           \
  template FeaturePyramid<T> sdi_forward(const FeaturePyramid<T>&, SdiParams<T>&);

UNETV2_INSTANTIATE_SDI(float)
UNETV2_INSTANTIATE_SDI(double)

}  // namespace unetv2
