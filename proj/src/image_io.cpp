#include "unetv2/data.hpp"

#include "unetv2/nn.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace unetv2 {
namespace fs = std::filesystem;
namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ImageError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

Tensor<float> to_rgb(Tensor<float> image) {
  if (image.extent(0) == 3) return image;
  const std::size_t h = image.extent(1), w = image.extent(2);
  Tensor<float> rgb({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) std::copy_n(image.data(), h * w, rgb.data() + c * h * w);
  return rgb;
}

Tensor<float> resize_image(const Tensor<float>& image, std::size_t size) {
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  if (h == size && w == size) return image;
  return kernels::bilinear_resize(image.reshaped({1, c, h, w}), {size, size}).reshaped({c, size, size});
}

Tensor<float> resize_mask(const Tensor<float>& mask, std::size_t size) {
  const std::size_t c = mask.extent(0), h = mask.extent(1), w = mask.extent(2);
  if (h == 0 || w == 0) throw ImageError("mask has a zero-sized dimension");
  Tensor<float> out({1, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = std::min(h - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * h / size));
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = std::min(w - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * w / size));
      float v = 0;
      for (std::size_t k = 0; k < c; ++k) v += mask(k, sy, sx);
      out(0, y, x) = v / static_cast<float>(c) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace

void encode_png(const Tensor<float>& image, const fs::path& path) {
  if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3)) {
    throw ImageError("encode_png: expected a (1|3, H, W) tensor, got " + to_string(image.shape()));
  }
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::vector<png_byte> pixels(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        const float v = std::clamp(image(k, y, x), 0.0f, 1.0f);
        pixels[(y * w + x) * c + k] = static_cast<png_byte>(std::lround(255.0f * v));
      }
    }
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("encode_png: " + path.string() + ": " + msg);
  }
}

Tensor<float> decode_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("decode_png: cannot decode " + path.string() + ": " + msg);
  }
  if (img.format & PNG_FORMAT_FLAG_COLORMAP) {
    png_image_free(&img);
    throw ImageError("decode_png: palette PNG not supported: " + path.string());
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw ImageError("decode_png: 16-bit PNG not supported: " + path.string());
  }
  if (img.width == 0 || img.height == 0) {
    png_image_free(&img);
    throw ImageError("decode_png: zero-sized image " + path.string());
  }
  const bool color = img.format & PNG_FORMAT_FLAG_COLOR;
  const std::size_t c = color ? 3 : 1, h = img.height, w = img.width;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("decode_png: " + path.string() + ": " + msg);
  }
  Tensor<float> out({c, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out(k, y, x) = static_cast<float>(pixels[(y * w + x) * c + k]) / 255.0f;
    }
  }
  return out;
}

std::vector<Sample> load_pairs(const fs::path& image_dir, const fs::path& mask_dir, std::size_t size) {
  const auto images = png_files(image_dir);
  const auto masks = png_files(mask_dir);
  for (const auto& [id, path] : masks) {
    if (!images.count(id)) throw ImageError("mask " + path.string() + " has no matching image");
  }
  std::vector<Sample> out;
  for (const auto& [id, path] : images) {
    auto it = masks.find(id);
    if (it == masks.end()) throw ImageError("image " + path.string() + " has no matching mask");
    Tensor<float> mask = decode_png(it->second);
    out.push_back({id, resize_image(to_rgb(decode_png(path)), size), resize_mask(mask, size)});
  }
  return out;
}

std::vector<Sample> load_images(const fs::path& image_dir, std::size_t size) {
  std::vector<Sample> out;
  for (const auto& [id, path] : png_files(image_dir)) {
    out.push_back({id, resize_image(to_rgb(decode_png(path)), size), Tensor<float>({1, size, size})});
  }
  return out;
}

}  // namespace unetv2
