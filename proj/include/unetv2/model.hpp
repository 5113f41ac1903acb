#ifndef UNETV2_MODEL_HPP
#define UNETV2_MODEL_HPP

#include "unetv2/flops.hpp"
#include "unetv2/sdi.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace unetv2 {

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

struct ModelConfig {
  std::size_t levels = 4;
  std::size_t fusion_channels = 32;
  std::vector<std::size_t> encoder_channels{32, 64, 128, 256};
  std::size_t input_channels = 3;
  /// Halvings before the first pyramid level: a stride-2 4x4 stem conv, then max pools.
  std::size_t stem_halvings = 2;
  /// Width of the decoder block at levels 0..M-2; empty means the fusion width everywhere.
  std::vector<std::size_t> decoder_channels;
  bool sdi_enabled = true;
  bool attention_enabled = true;
  bool shared_smoothing = false;
  std::size_t norm_groups = 8;

  void validate() const;
  /// Input height and width must be multiples of this.
  std::size_t input_divisor() const;
  void validate_input(std::size_t height, std::size_t width) const;
  std::size_t decoder_width(std::size_t level) const;
  SdiConfig sdi_config() const;
};

enum class Ablation { none, no_sdi, no_sc };

Ablation parse_ablation(const std::string& name);
std::string to_string(Ablation a);
ModelConfig with_ablation(ModelConfig config, Ablation a);

/// conv (no bias; 3x3, or 4x4 when strided) -> group norm -> relu
template <typename T>
struct ConvBlock {
  Conv2dParams<T> conv;
  Parameter<T> gamma;
  Parameter<T> beta;
  std::size_t groups = 1;

  static ConvBlock create(const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
                          std::size_t groups, Rng& rng);
  Var<T> operator()(Var<T> x);
  std::vector<Parameter<T>*> parameters();
};

struct ParamBreakdown {
  std::size_t encoder = 0, skip = 0, decoder = 0, head = 0;
  std::size_t total() const { return encoder + skip + decoder + head; }
};

struct FlopReport {
  flops::Count encoder = 0, skip = 0, decoder = 0, head = 0;
  flops::Count total() const { return encoder + skip + decoder + head; }
};

/// Convolutional pyramid encoder, SDI skip refinement (or plain projected
/// skips), concatenating decoder and a one-logit head.
template <typename T>
class UNetV2 {
 public:
  UNetV2(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  FeaturePyramid<T> encode(Var<T> image);
  /// SDI refinement, or the 1x1-projected encoder outputs when SDI is disabled.
  FeaturePyramid<T> refine(const FeaturePyramid<T>& features);
  Var<T> decode(const FeaturePyramid<T>& refined, Extent2 output);
  /// (N, C_in, H, W) image -> (N, 1, H, W) logits
  Var<T> forward(Var<T> image);

  /// Every learnable tensor in a fixed order; names are unique.
  std::vector<Parameter<T>*> parameters();
  ParamBreakdown param_breakdown();

  NamedTensors state();
  /// Requires exactly the registry's names and shapes.
  void load_state(const NamedTensors& state);

  void zero_grad();

 private:
  ModelConfig config_;
  ConvBlock<T> stem_;
  std::vector<std::array<ConvBlock<T>, 2>> encoder_;
  std::optional<SdiParams<T>> sdi_;
  std::vector<Conv2dParams<T>> skip_projection_;
  std::vector<ConvBlock<T>> decoder_;  // index i refines level i, i < M-1
  Conv2dParams<T> head_;
};

template <typename T>
std::size_t count_params(const std::vector<Parameter<T>*>& registry) {
  std::size_t total = 0;
  for (const auto* p : registry) total += p->value.size();
  return total;
}

/// Operation count of one forward pass on an (n, C_in, height, width) batch.
FlopReport estimate_flops(const ModelConfig& config, std::size_t n, std::size_t height, std::size_t width);

namespace flops {
Count spatial_attention(Count n, Count c, Count h, Count w);
Count channel_attention(Count n, Count c, Count h, Count w);
}  // namespace flops

}  // namespace unetv2

#endif  // UNETV2_MODEL_HPP
