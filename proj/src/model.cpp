#include "unetv2/model.hpp"

#include "unetv2/ops.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace unetv2 {

void ModelConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("model: need at least 2 levels, got " + std::to_string(levels));
  if (encoder_channels.size() != levels) {
    throw std::invalid_argument("model: encoder channel plan has " + std::to_string(encoder_channels.size()) +
                                " entries for " + std::to_string(levels) + " levels");
  }
  if (!decoder_channels.empty() && decoder_channels.size() != levels - 1) {
    throw std::invalid_argument("model: decoder channel plan needs " + std::to_string(levels - 1) + " entries");
  }
  if (fusion_channels == 0 || input_channels == 0 || norm_groups == 0) {
    throw std::invalid_argument("model: channel counts must be positive");
  }
  for (std::size_t c : encoder_channels) {
    if (c == 0) throw std::invalid_argument("model: encoder channels must be positive");
  }
  for (std::size_t c : decoder_channels) {
    if (c == 0) throw std::invalid_argument("model: decoder channels must be positive");
  }
}

std::size_t ModelConfig::input_divisor() const { return std::size_t{1} << (stem_halvings + levels - 1); }

void ModelConfig::validate_input(std::size_t height, std::size_t width) const {
  const std::size_t d = input_divisor();
  if (height == 0 || width == 0 || height % d != 0 || width % d != 0) {
    throw std::invalid_argument("model: input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by " + std::to_string(d));
  }
}

std::size_t ModelConfig::decoder_width(std::size_t level) const {
  return decoder_channels.empty() ? fusion_channels : decoder_channels.at(level);
}

SdiConfig ModelConfig::sdi_config() const {
  SdiConfig s;
  s.in_channels = encoder_channels;
  s.fusion_channels = fusion_channels;
  s.attention = attention_enabled;
  s.shared_smoothing = shared_smoothing;
  return s;
}

Ablation parse_ablation(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no-sdi") return Ablation::no_sdi;
  if (name == "no-sc") return Ablation::no_sc;
  throw std::invalid_argument("unknown ablation '" + name + "' (expected none, no-sdi or no-sc)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_sdi: return "no-sdi";
    case Ablation::no_sc: return "no-sc";
  }
  return "none";
}

ModelConfig with_ablation(ModelConfig config, Ablation a) {
  config.sdi_enabled = a != Ablation::no_sdi;
  config.attention_enabled = a == Ablation::none;
  return config;
}

template <typename T>
ConvBlock<T> ConvBlock<T>::create(const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
                                  std::size_t groups, Rng& rng) {
  ConvBlock b;
  // an even kernel keeps the strided output extent integral on even inputs
  const std::size_t kernel = stride == 2 ? 4 : 3;
  b.conv = Conv2dParams<T>::create(name + ".conv", in, out, kernel, stride, 1, false, rng, std::sqrt(6.0));
  b.gamma = Parameter<T>(name + ".norm.gamma", Tensor<T>({out}, T{1}));
  b.beta = Parameter<T>(name + ".norm.beta", Tensor<T>({out}));
  b.groups = group_count(out, groups);
  return b;
}

template <typename T>
Var<T> ConvBlock<T>::operator()(Var<T> x) {
  auto& g = x.graph();
  return relu(group_norm(conv2d(x, conv), groups, g.parameter(gamma), g.parameter(beta)));
}

template <typename T>
std::vector<Parameter<T>*> ConvBlock<T>::parameters() {
  auto out = conv.parameters();
  out.push_back(&gamma);
  out.push_back(&beta);
  return out;
}

template <typename T>
UNetV2<T>::UNetV2(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const auto& ch = config_.encoder_channels;
  const std::size_t m = config_.levels;
  stem_ = ConvBlock<T>::create("encoder.stem", config_.input_channels, ch[0], config_.stem_halvings > 0 ? 2 : 1,
                               config_.norm_groups, rng);
  for (std::size_t i = 0; i < m; ++i) {
    const std::string name = "encoder.level" + std::to_string(i);
    const std::size_t in = i == 0 ? ch[0] : ch[i - 1];
    encoder_.push_back({ConvBlock<T>::create(name + ".block0", in, ch[i], 1, config_.norm_groups, rng),
                        ConvBlock<T>::create(name + ".block1", ch[i], ch[i], 1, config_.norm_groups, rng)});
  }
  if (config_.sdi_enabled) {
    sdi_ = SdiParams<T>::create(config_.sdi_config(), rng, "sdi");
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      skip_projection_.push_back(Conv2dParams<T>::create("skip.level" + std::to_string(i) + ".proj", ch[i],
                                                         config_.fusion_channels, 1, 1, 0, true, rng));
    }
  }
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const std::size_t below = i + 2 < m ? config_.decoder_width(i + 1) : config_.fusion_channels;
    decoder_.push_back(ConvBlock<T>::create("decoder.level" + std::to_string(i), below + config_.fusion_channels,
                                            config_.decoder_width(i), 1, config_.norm_groups, rng));
  }
  head_ = Conv2dParams<T>::create("head", config_.decoder_width(0), 1, 1, 1, 0, true, rng);

  std::set<std::string> names;
  for (auto* p : parameters()) {
    if (!names.insert(p->name).second) throw std::logic_error("model: duplicate parameter name " + p->name);
  }
}

template <typename T>
FeaturePyramid<T> UNetV2<T>::encode(Var<T> image) {
  const Dims4 d = Dims4::of(image.shape());
  if (d.c != config_.input_channels) {
    throw std::invalid_argument("model: image has " + std::to_string(d.c) + " channels, expected " +
                                std::to_string(config_.input_channels));
  }
  config_.validate_input(d.h, d.w);
  Var<T> x = stem_(image);
  for (std::size_t k = 1; k < config_.stem_halvings; ++k) x = max_pool2d(x);
  FeaturePyramid<T> out;
  for (std::size_t i = 0; i < config_.levels; ++i) {
    if (i > 0) x = max_pool2d(x);
    x = encoder_[i][1](encoder_[i][0](x));
    out.levels.push_back(x);
  }
  return out;
}

template <typename T>
FeaturePyramid<T> UNetV2<T>::refine(const FeaturePyramid<T>& features) {
  if (sdi_) return sdi_forward(features, *sdi_);
  FeaturePyramid<T> out;
  for (std::size_t i = 0; i < features.size(); ++i) out.levels.push_back(conv2d(features[i], skip_projection_[i]));
  return out;
}

template <typename T>
Var<T> UNetV2<T>::decode(const FeaturePyramid<T>& refined, Extent2 output) {
  if (refined.size() != config_.levels) throw std::invalid_argument("decoder: wrong number of levels");
  for (std::size_t i = 0; i < refined.size(); ++i) {
    if (Dims4::of(refined[i].shape()).c != config_.fusion_channels) {
      throw std::invalid_argument("decoder: level " + std::to_string(i) + " must have " +
                                  std::to_string(config_.fusion_channels) + " channels");
    }
  }
  Var<T> x = refined[config_.levels - 1];
  for (std::size_t i = config_.levels - 1; i-- > 0;) {
    Var<T> up = bilinear_resize(x, refined.extent(i));
    x = decoder_[i](concat({up, refined[i]}, 1));
  }
  return conv2d(bilinear_resize(x, output), head_);
}

template <typename T>
Var<T> UNetV2<T>::forward(Var<T> image) {
  const Dims4 d = Dims4::of(image.shape());
  return decode(refine(encode(image)), {d.h, d.w});
}

template <typename T>
std::vector<Parameter<T>*> UNetV2<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto append = [&out](auto&& ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  append(stem_.parameters());
  for (auto& level : encoder_) {
    for (auto& block : level) append(block.parameters());
  }
  if (sdi_) append(sdi_->parameters());
  for (auto& p : skip_projection_) append(p.parameters());
  for (auto& block : decoder_) append(block.parameters());
  append(head_.parameters());
  return out;
}

template <typename T>
ParamBreakdown UNetV2<T>::param_breakdown() {
  ParamBreakdown b;
  b.encoder = count_params(stem_.parameters());
  for (auto& level : encoder_) {
    for (auto& block : level) b.encoder += count_params(block.parameters());
  }
  if (sdi_) b.skip = count_params(sdi_->parameters());
  for (auto& p : skip_projection_) b.skip += count_params(p.parameters());
  for (auto& block : decoder_) b.decoder += count_params(block.parameters());
  b.head = count_params(head_.parameters());
  return b;
}

template <typename T>
NamedTensors UNetV2<T>::state() {
  NamedTensors out;
  for (auto* p : parameters()) out.emplace_back(p->name, p->value.template cast<float>());
  return out;
}

template <typename T>
void UNetV2<T>::load_state(const NamedTensors& state) {
  auto registry = parameters();
  if (state.size() != registry.size()) {
    throw std::invalid_argument("load_state: " + std::to_string(state.size()) + " tensors for a registry of " +
                                std::to_string(registry.size()));
  }
  for (std::size_t k = 0; k < registry.size(); ++k) {
    const auto& [name, value] = state[k];
    Parameter<T>& p = *registry[k];
    if (name != p.name) throw std::invalid_argument("load_state: expected '" + p.name + "', found '" + name + "'");
    if (value.shape() != p.value.shape()) {
      throw std::invalid_argument("load_state: '" + name + "' has shape " + to_string(value.shape()) +
                                  ", expected " + to_string(p.value.shape()));
    }
    p.value = value.template cast<T>();
    p.zero_grad();
  }
}

template <typename T>
void UNetV2<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

namespace flops {

Count spatial_attention(Count n, Count c, Count h, Count w) {
  const Count x = n * c * h * w;
  const Count plane = n * h * w;
  return reduce_mean(x, plane) + reduce_max(x) + conv2d(n, 2, 1, 7, h, w, true) + sigmoid(plane) + elementwise(x);
}

Count channel_attention(Count n, Count c, Count h, Count w) {
  const Count x = n * c * h * w;
  const Count hidden = c / attention_reduction(c);
  const Count mlp = matmul(n, c, hidden) + relu(n * hidden) + matmul(n, hidden, c);
  return reduce_mean(x, n * c) + reduce_max(x) + 2 * mlp + elementwise(n * c) + sigmoid(n * c) + elementwise(x);
}

}  // namespace flops

namespace {

flops::Count block_flops(std::size_t n, std::size_t in, std::size_t out, std::size_t ho, std::size_t wo,
                         std::size_t kernel = 3) {
  const flops::Count elems = n * out * ho * wo;
  return flops::conv2d(n, in, out, kernel, ho, wo, false) + flops::group_norm(elems) + flops::relu(elems);
}

flops::Count covered_by_pool(std::size_t in, std::size_t out) {
  flops::Count total = 0;
  for (std::size_t a = 0; a < out; ++a) total += ((a + 1) * in + out - 1) / out - a * in / out;
  return total;
}

}  // namespace

FlopReport estimate_flops(const ModelConfig& config, std::size_t n, std::size_t height, std::size_t width) {
  config.validate();
  config.validate_input(height, width);
  FlopReport r;
  const auto& ch = config.encoder_channels;
  const std::size_t m = config.levels;
  const std::size_t c = config.fusion_channels;

  std::size_t h = config.stem_halvings > 0 ? height / 2 : height;
  std::size_t w = config.stem_halvings > 0 ? width / 2 : width;
  r.encoder += block_flops(n, config.input_channels, ch[0], h, w, config.stem_halvings > 0 ? 4 : 3);
  for (std::size_t k = 1; k < config.stem_halvings; ++k) {
    h /= 2;
    w /= 2;
    r.encoder += flops::max_pool2d(n * ch[0] * h * w);
  }
  std::vector<Extent2> extent;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t in = i == 0 ? ch[0] : ch[i - 1];
    if (i > 0) {
      h /= 2;
      w /= 2;
      r.encoder += flops::max_pool2d(n * in * h * w);
    }
    r.encoder += block_flops(n, in, ch[i], h, w) + block_flops(n, ch[i], ch[i], h, w);
    extent.push_back({h, w});
  }

  for (std::size_t i = 0; i < m; ++i) {
    const auto [hi, wi] = extent[i];
    if (config.sdi_enabled && config.attention_enabled) {
      r.skip += flops::spatial_attention(n, ch[i], hi, wi) + flops::channel_attention(n, ch[i], hi, wi);
    }
    r.skip += flops::conv2d(n, ch[i], c, 1, hi, wi, true);
  }
  if (config.sdi_enabled) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto [hi, wi] = extent[i];
      const flops::Count outputs = n * c * hi * wi;
      for (std::size_t j = 0; j < m; ++j) {
        if (j < i) {
          r.skip += flops::adaptive_avg_pool2d(
              n * c * covered_by_pool(extent[j].h, hi) * covered_by_pool(extent[j].w, wi), outputs);
        } else if (j > i) {
          r.skip += flops::bilinear_resize(outputs);
        }
        r.skip += flops::conv2d(n, c, c, 3, hi, wi, true);
      }
      r.skip += (m - 1) * flops::elementwise(outputs);
    }
  }

  std::size_t running = c;
  for (std::size_t i = m - 1; i-- > 0;) {
    const auto [hi, wi] = extent[i];
    r.decoder += flops::bilinear_resize(n * running * hi * wi);
    r.decoder += block_flops(n, running + c, config.decoder_width(i), hi, wi);
    running = config.decoder_width(i);
  }
  r.head = flops::bilinear_resize(n * running * height * width) +
           flops::conv2d(n, running, 1, 1, height, width, true);
  return r;
}

template struct ConvBlock<float>;
template struct ConvBlock<double>;
template class UNetV2<float>;
template class UNetV2<double>;

}  // namespace unetv2
