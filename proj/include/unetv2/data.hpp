#ifndef UNETV2_DATA_HPP
#define UNETV2_DATA_HPP

#include "unetv2/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unetv2 {

/// image: (3, H, W) in [0, 1]; mask: (1, H, W) with values in {0, 1}.
struct Sample {
  std::string id;
  Tensor<float> image;
  Tensor<float> mask;
};

enum class ObjectKind { disk, ring, blob };

struct SynthSpec {
  std::size_t count = 300;
  std::size_t size = 64;
  std::uint64_t seed = 0;
  std::vector<ObjectKind> kinds{ObjectKind::disk, ObjectKind::ring, ObjectKind::blob};
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  /// Object radius range as a fraction of the image size.
  double min_scale = 0.06;
  double max_scale = 0.3;
  /// Standard deviation of the additive Gaussian pixel noise.
  double noise = 0.05;
  bool texture = true;
  /// Place every object at the image center (used for exact-area checks).
  bool centered = false;

  void validate() const;
  /// Mixed tiny/large objects under strong noise.
  static SynthSpec hard(std::size_t count, std::size_t size, std::uint64_t seed);
};

/// Sample `index` of the set described by `spec`; a pure function of both.
Sample synth_sample(const SynthSpec& spec, std::size_t index);
std::vector<Sample> synth_generate(const SynthSpec& spec);

/// Pixel (x, y) belongs to the disk when its center lies within `radius`.
bool in_disk(double px, double py, double cx, double cy, double radius);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Deterministic hash-ordered split; val receives floor(count * val_fraction) indices.
Split split_indices(std::size_t count, std::uint64_t seed, double val_fraction = 0.2);

template <typename U>
std::vector<U> gather(std::span<const U> items, std::span<const std::size_t> indices) {
  std::vector<U> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(items[i]);
  return out;
}

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes a (1, H, W) or (3, H, W) tensor in [0, 1] as 8-bit PNG, q = round(255 v).
void encode_png(const Tensor<float>& image, const std::filesystem::path& path);
/// Reads an 8-bit gray, gray+alpha, RGB or RGBA PNG into (C, H, W), C in {1, 3};
/// alpha is dropped. 16-bit, sub-byte and palette images are rejected.
Tensor<float> decode_png(const std::filesystem::path& path);

/// Pairs `images/<id>.png` with `masks/<id>.png`, resizing to size x size
/// (bilinear for images, nearest for masks) and binarizing masks at 0.5.
std::vector<Sample> load_pairs(const std::filesystem::path& image_dir, const std::filesystem::path& mask_dir,
                               std::size_t size);

/// Images of a directory without masks; mask is left all-zero.
std::vector<Sample> load_images(const std::filesystem::path& image_dir, std::size_t size);

}  // namespace unetv2

#endif  // UNETV2_DATA_HPP
