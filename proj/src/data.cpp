#include "unetv2/data.hpp"

#include "unetv2/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace unetv2 {
namespace {

constexpr int kMaxAttempts = 16;

struct Object {
  ObjectKind kind;
  double cx, cy, radius;
  double inner = 0;                  // ring
  double wobble = 0, lobes = 0, phase = 0;  // blob
  float color[3];

  bool contains(double px, double py) const {
    switch (kind) {
      case ObjectKind::disk: return in_disk(px, py, cx, cy, radius);
      case ObjectKind::ring: return in_disk(px, py, cx, cy, radius) && !in_disk(px, py, cx, cy, inner);
      case ObjectKind::blob: {
        const double angle = std::atan2(py - cy, px - cx);
        return in_disk(px, py, cx, cy, radius * (1.0 + wobble * std::sin(lobes * angle + phase)));
      }
    }
    return false;
  }
};

Object draw_object(const SynthSpec& spec, Rng& rng) {
  Object o{};
  o.kind = spec.kinds[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(spec.kinds.size()) - 1))];
  const double size = static_cast<double>(spec.size);
  o.radius = uniform(rng, spec.min_scale, spec.max_scale) * size;
  if (spec.centered) {
    o.cx = o.cy = size / 2;
  } else {
    const double margin = std::min(o.radius, size / 2);
    o.cx = uniform(rng, margin, size - margin);
    o.cy = uniform(rng, margin, size - margin);
  }
  o.inner = o.radius * uniform(rng, 0.45, 0.65);
  o.wobble = uniform(rng, 0.15, 0.3);
  o.lobes = static_cast<double>(uniform_int(rng, 2, 4));
  o.phase = uniform(rng, 0, 2 * M_PI);
  for (float& c : o.color) c = static_cast<float>(uniform(rng, 0.6, 0.95));
  return o;
}

}  // namespace

bool in_disk(double px, double py, double cx, double cy, double radius) {
  const double dx = px - cx, dy = py - cy;
  return dx * dx + dy * dy <= radius * radius;
}

void SynthSpec::validate() const {
  if (count == 0) throw std::invalid_argument("synth: count must be at least 1");
  if (size == 0) throw std::invalid_argument("synth: size must be positive");
  if (kinds.empty()) throw std::invalid_argument("synth: no object kinds");
  if (min_objects == 0 || min_objects > max_objects) throw std::invalid_argument("synth: invalid object count range");
  if (!(min_scale > 0 && min_scale <= max_scale && max_scale <= 0.5)) {
    throw std::invalid_argument("synth: scale range must satisfy 0 < min <= max <= 0.5");
  }
  if (noise < 0) throw std::invalid_argument("synth: noise amplitude must be non-negative");
}

SynthSpec SynthSpec::hard(std::size_t count, std::size_t size, std::uint64_t seed) {
  SynthSpec s;
  s.count = count;
  s.size = size;
  s.seed = seed;
  s.min_scale = 0.03;
  s.max_scale = 0.35;
  s.noise = 0.3;
  return s;
}

Sample synth_sample(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng(splitmix64(spec.seed ^ splitmix64(index)));
  const std::size_t n = spec.size;
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05zu", index);

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Sample s{id, Tensor<float>({3, n, n}), Tensor<float>({1, n, n})};
    float background[3];
    for (float& b : background) b = static_cast<float>(uniform(rng, 0.15, 0.45));
    const double fx = uniform(rng, 0.05, 0.25), fy = uniform(rng, 0.05, 0.25), phase = uniform(rng, 0, 2 * M_PI);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          double v = background[c];
          if (spec.texture) v += 0.08 * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + phase);
          s.image(c, y, x) = static_cast<float>(v);
        }
      }
    }
    const auto objects = static_cast<std::size_t>(
        uniform_int(rng, static_cast<std::int64_t>(spec.min_objects), static_cast<std::int64_t>(spec.max_objects)));
    for (std::size_t k = 0; k < objects; ++k) {
      const Object o = draw_object(spec, rng);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          if (!o.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
          s.mask(0, y, x) = 1.0f;
          for (std::size_t c = 0; c < 3; ++c) s.image(c, y, x) = o.color[c];
        }
      }
    }
    if (spec.noise > 0) {
      for (auto& v : s.image.values()) v = static_cast<float>(v + spec.noise * normal(rng));
    }
    for (auto& v : s.image.values()) v = std::clamp(v, 0.0f, 1.0f);
    if (std::any_of(s.mask.values().begin(), s.mask.values().end(), [](float v) { return v > 0; })) return s;
  }
  throw std::runtime_error("synth: could not draw a nonempty mask for sample " + std::string(id));
}

std::vector<Sample> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(synth_sample(spec, i));
  return out;
}

Split split_indices(std::size_t count, std::uint64_t seed, double val_fraction) {
  if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("split: fraction must lie in [0, 1)");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  const std::uint64_t salt = splitmix64(seed ^ 0x5eed5eed5eedULL);
  std::sort(order.begin(), order.end(), [salt](std::size_t a, std::size_t b) {
    const auto ha = splitmix64(salt ^ a), hb = splitmix64(salt ^ b);
    return ha != hb ? ha < hb : a < b;
  });
  const auto val_count = static_cast<std::size_t>(std::floor(static_cast<double>(count) * val_fraction));
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace unetv2
