#include "unetv2/nn.hpp"

#include "unetv2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace unetv2 {
namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t out_plane() const { return ho * wo; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

std::size_t conv_extent(const char* axis, std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (padded < k || (padded - k) % stride != 0) {
    throw std::invalid_argument(std::string("conv2d: non-integral output ") + axis + " for input " +
                                std::to_string(in) + ", kernel " + std::to_string(k) + ", stride " +
                                std::to_string(stride) + ", padding " + std::to_string(pad));
  }
  return (padded - k) / stride + 1;
}

// cols is (C_in*k*k, Ho*Wo) for one sample
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto ih = static_cast<std::ptrdiff_t>(g.h), iw = static_cast<std::ptrdiff_t>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        T* dst = cols + row * g.out_plane();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* drow = dst + oy * g.wo;
          if (iy < 0 || iy >= ih) {
            std::fill_n(drow, g.wo, T{0});
            continue;
          }
          const T* srow = plane + iy * iw;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            drow[ox] = (ix < 0 || ix >= iw) ? T{0} : srow[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto ih = static_cast<std::ptrdiff_t>(g.h), iw = static_cast<std::ptrdiff_t>(g.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        const T* src = cols + row * g.out_plane();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= ih) continue;
          T* drow = plane + iy * iw;
          const T* srow = src + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < iw) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

struct LerpAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

LerpAxis lerp_axis(std::size_t in, std::size_t out) {
  LerpAxis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (std::size_t d = 0; d < out; ++d) {
    double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    a.lo[d] = i0;
    a.hi[d] = std::min(i0 + 1, in - 1);
    a.frac[d] = s - static_cast<double>(i0);
  }
  return a;
}

struct PoolWindows {
  std::vector<std::size_t> begin, end;
};

PoolWindows pool_windows(std::size_t in, std::size_t out) {
  PoolWindows p;
  for (std::size_t a = 0; a < out; ++a) {
    p.begin.push_back(a * in / out);
    p.end.push_back(((a + 1) * in + out - 1) / out);
  }
  return p;
}

void check_resize_target(const char* op, const Dims4& d, Extent2 out, bool shrink_only) {
  if (out.h == 0 || out.w == 0) throw std::invalid_argument(std::string(op) + ": output extent must be positive");
  if (shrink_only && (out.h > d.h || out.w > d.w)) {
    throw std::invalid_argument(std::string(op) + ": output " + std::to_string(out.h) + "x" + std::to_string(out.w) +
                                " larger than input " + std::to_string(d.h) + "x" + std::to_string(d.w));
  }
}

}  // namespace

std::size_t attention_reduction(std::size_t channels) {
  std::size_t r = std::min<std::size_t>(16, channels);
  while (channels % r != 0) --r;
  return r;
}

std::size_t attention_param_count(std::size_t channels) {
  const std::size_t hidden = channels / attention_reduction(channels);
  return 2 * channels * hidden + (2 * 7 * 7 + 1);
}

std::size_t group_count(std::size_t channels, std::size_t preferred) {
  std::size_t g = std::min(preferred, channels);
  while (channels % g != 0) --g;
  return g;
}

template <typename T>
Conv2dParams<T> Conv2dParams<T>::create(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                                        std::size_t stride, std::size_t padding, bool with_bias, Rng& rng,
                                        double gain) {
  Conv2dParams p;
  Tensor<T> w({out, in, kernel, kernel});
  const double bound = gain / std::sqrt(static_cast<double>(in * kernel * kernel));
  for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -bound, bound));
  p.weight = Parameter<T>(name + ".weight", std::move(w));
  if (with_bias) p.bias = Parameter<T>(name + ".bias", Tensor<T>({out}));
  p.stride = stride;
  p.padding = padding;
  return p;
}

template <typename T>
std::vector<Parameter<T>*> Conv2dParams<T>::parameters() {
  std::vector<Parameter<T>*> out{&weight};
  if (bias) out.push_back(&*bias);
  return out;
}

template <typename T>
AttentionParams<T> AttentionParams<T>::create(const std::string& name, std::size_t channels, Rng& rng) {
  AttentionParams p;
  const std::size_t hidden = channels / attention_reduction(channels);
  auto dense = [&rng](std::size_t in, std::size_t out) {
    Tensor<T> w({in, out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.values()) v = static_cast<T>(uniform(rng, -bound, bound));
    return w;
  };
  p.mlp_in = Parameter<T>(name + ".channel.fc1", dense(channels, hidden));
  p.mlp_out = Parameter<T>(name + ".channel.fc2", dense(hidden, channels));
  p.spatial = Conv2dParams<T>::create(name + ".spatial", 2, 1, 7, 1, 3, true, rng);
  return p;
}

template <typename T>
std::vector<Parameter<T>*> AttentionParams<T>::parameters() {
  std::vector<Parameter<T>*> out{&mlp_in, &mlp_out};
  for (auto* q : spatial.parameters()) out.push_back(q);
  return out;
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding) {
  const Dims4 d = Dims4::of(x.shape());
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != ws[3]) {
    throw std::invalid_argument("conv2d: weight must be (C_out, C_in, k, k), got " + to_string(ws));
  }
  if (ws[1] != d.c) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                                std::to_string(ws[1]));
  }
  if (bias && bias->shape() != Shape{ws[0]}) {
    throw std::invalid_argument("conv2d: bias shape " + to_string(bias->shape()) + " does not match C_out");
  }
  ConvGeometry g{d.n, d.c, d.h, d.w, ws[0], ws[2], stride, padding, 0, 0};
  g.ho = conv_extent("height", d.h, g.k, stride, padding);
  g.wo = conv_extent("width", d.w, g.k, stride, padding);

  const auto& xv = x.value();
  const auto& wv = weight.value();
  Tensor<T> out({g.n, g.cout, g.ho, g.wo});
  std::vector<T> cols(g.is_pointwise() ? 0 : g.patch() * g.out_plane());
  const auto wm = wv.matrix(g.cout, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = xv.data() + n * g.cin * g.h * g.w;
    const T* src = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, cols.data());
      src = cols.data();
    }
    MatrixMap<T> on(out.data() + n * g.cout * g.out_plane(), g.cout, g.out_plane());
    on.noalias() = wm * ConstMatrixMap<T>(src, g.patch(), g.out_plane());
    if (bias) {
      const auto& bv = bias->value();
      for (std::size_t o = 0; o < g.cout; ++o) on.row(o).array() += bv[o];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.graph().record("conv2d", std::move(out), inputs, [x, weight, bias, g](Graph<T>& gr, const Tensor<T>& grad) {
    const auto& xv = gr.value(x);
    const auto& wv = gr.value(weight);
    auto* gx = gr.grad_target(x);
    auto* gw = gr.grad_target(weight);
    auto* gb = bias ? gr.grad_target(*bias) : nullptr;
    std::vector<T> cols(g.is_pointwise() ? 0 : g.patch() * g.out_plane());
    std::vector<T> dcols(gx && !g.is_pointwise() ? g.patch() * g.out_plane() : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMatrixMap<T> gn(grad.data() + n * g.cout * g.out_plane(), g.cout, g.out_plane());
      const T* xn = xv.data() + n * g.cin * g.h * g.w;
      if (gw) {
        const T* src = xn;
        if (!g.is_pointwise()) {
          im2col(xn, g, cols.data());
          src = cols.data();
        }
        gw->matrix(g.cout, g.patch()).noalias() += gn * ConstMatrixMap<T>(src, g.patch(), g.out_plane()).transpose();
      }
      if (gx) {
        T* dxn = gx->data() + n * g.cin * g.h * g.w;
        if (g.is_pointwise()) {
          MatrixMap<T>(dxn, g.cin, g.out_plane()).noalias() += wv.matrix(g.cout, g.patch()).transpose() * gn;
        } else {
          MatrixMap<T>(dcols.data(), g.patch(), g.out_plane()).noalias() =
              wv.matrix(g.cout, g.patch()).transpose() * gn;
          col2im_add(dcols.data(), g, dxn);
        }
      }
      if (gb) {
        for (std::size_t o = 0; o < g.cout; ++o) (*gb)[o] += gn.row(o).sum();
      }
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Conv2dParams<T>& p) {
  auto& g = x.graph();
  std::optional<Var<T>> b;
  if (p.bias) b = g.parameter(*p.bias);
  return conv2d(x, g.parameter(p.weight), b, p.stride, p.padding);
}

template <typename T>
Var<T> max_pool2d(Var<T> x) {
  const Dims4 d = Dims4::of(x.shape());
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw std::invalid_argument("max_pool2d: spatial extent " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                                " not divisible by 2");
  }
  const std::size_t ho = d.h / 2, wo = d.w / 2;
  Tensor<T> out({d.n, d.c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.value();
  std::size_t o = 0;
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const std::size_t base = p * d.plane();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + 2 * oy * d.w + 2 * ox;
        for (std::size_t ky = 0; ky < 2; ++ky) {
          for (std::size_t kx = 0; kx < 2; ++kx) {
            const std::size_t k = base + (2 * oy + ky) * d.w + 2 * ox + kx;
            if (xv[k] > xv[best]) best = k;
          }
        }
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return x.graph().record("max_pool2d", std::move(out), {x}, [x, argmax](Graph<T>& g, const Tensor<T>& grad) {
    if (auto* t = g.grad_target(x)) {
      for (std::size_t k = 0; k < grad.size(); ++k) (*t)[(*argmax)[k]] += grad[k];
    }
  });
}

namespace kernels {

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, Extent2 out) {
  const Dims4 d = Dims4::of(x.shape());
  check_resize_target("adaptive_avg_pool2d", d, out, true);
  const auto rows = pool_windows(d.h, out.h);
  const auto cols = pool_windows(d.w, out.w);
  Tensor<T> y({d.n, d.c, out.h, out.w});
  std::size_t o = 0;
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* plane = x.data() + p * d.plane();
    for (std::size_t a = 0; a < out.h; ++a) {
      for (std::size_t b = 0; b < out.w; ++b, ++o) {
        T sum{0};
        for (std::size_t i = rows.begin[a]; i < rows.end[a]; ++i) {
          for (std::size_t j = cols.begin[b]; j < cols.end[b]; ++j) sum += plane[i * d.w + j];
        }
        y[o] = sum / static_cast<T>((rows.end[a] - rows.begin[a]) * (cols.end[b] - cols.begin[b]));
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, Extent2 out) {
  const Dims4 d = Dims4::of(x.shape());
  check_resize_target("bilinear_resize", d, out, false);
  const auto ay = lerp_axis(d.h, out.h);
  const auto ax = lerp_axis(d.w, out.w);
  Tensor<T> y({d.n, d.c, out.h, out.w});
  std::size_t o = 0;
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* plane = x.data() + p * d.plane();
    for (std::size_t a = 0; a < out.h; ++a) {
      const T fy = static_cast<T>(ay.frac[a]);
      const T* r0 = plane + ay.lo[a] * d.w;
      const T* r1 = plane + ay.hi[a] * d.w;
      for (std::size_t b = 0; b < out.w; ++b, ++o) {
        const T fx = static_cast<T>(ax.frac[b]);
        const T top = (T{1} - fx) * r0[ax.lo[b]] + fx * r0[ax.hi[b]];
        const T bottom = (T{1} - fx) * r1[ax.lo[b]] + fx * r1[ax.hi[b]];
        y[o] = (T{1} - fy) * top + fy * bottom;
      }
    }
  }
  return y;
}

}  // namespace kernels

template <typename T>
Var<T> adaptive_avg_pool2d(Var<T> x, Extent2 out) {
  const Dims4 d = Dims4::of(x.shape());
  auto y = kernels::adaptive_avg_pool2d(x.value(), out);
  return x.graph().record("adaptive_avg_pool2d", std::move(y), {x}, [x, d, out](Graph<T>& g, const Tensor<T>& grad) {
    auto* t = g.grad_target(x);
    if (!t) return;
    const auto rows = pool_windows(d.h, out.h);
    const auto cols = pool_windows(d.w, out.w);
    std::size_t o = 0;
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      T* plane = t->data() + p * d.plane();
      for (std::size_t a = 0; a < out.h; ++a) {
        for (std::size_t b = 0; b < out.w; ++b, ++o) {
          const T share =
              grad[o] / static_cast<T>((rows.end[a] - rows.begin[a]) * (cols.end[b] - cols.begin[b]));
          for (std::size_t i = rows.begin[a]; i < rows.end[a]; ++i) {
            for (std::size_t j = cols.begin[b]; j < cols.end[b]; ++j) plane[i * d.w + j] += share;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> bilinear_resize(Var<T> x, Extent2 out) {
  const Dims4 d = Dims4::of(x.shape());
  auto y = kernels::bilinear_resize(x.value(), out);
  return x.graph().record("bilinear_resize", std::move(y), {x}, [x, d, out](Graph<T>& g, const Tensor<T>& grad) {
    auto* t = g.grad_target(x);
    if (!t) return;
    const auto ay = lerp_axis(d.h, out.h);
    const auto ax = lerp_axis(d.w, out.w);
    std::size_t o = 0;
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      T* plane = t->data() + p * d.plane();
      for (std::size_t a = 0; a < out.h; ++a) {
        const T fy = static_cast<T>(ay.frac[a]);
        T* r0 = plane + ay.lo[a] * d.w;
        T* r1 = plane + ay.hi[a] * d.w;
        for (std::size_t b = 0; b < out.w; ++b, ++o) {
          const T fx = static_cast<T>(ax.frac[b]);
          const T gtop = (T{1} - fy) * grad[o];
          const T gbottom = fy * grad[o];
          r0[ax.lo[b]] += (T{1} - fx) * gtop;
          r0[ax.hi[b]] += fx * gtop;
          r1[ax.lo[b]] += (T{1} - fx) * gbottom;
          r1[ax.hi[b]] += fx * gbottom;
        }
      }
    }
  });
}

template <typename T>
Var<T> group_norm(Var<T> x, std::size_t groups, Var<T> gamma, Var<T> beta) {
  const Dims4 d = Dims4::of(x.shape());
  if (groups == 0 || d.c % groups != 0) {
    throw std::invalid_argument("group_norm: " + std::to_string(groups) + " groups do not divide " +
                                std::to_string(d.c) + " channels");
  }
  if (gamma.shape() != Shape{d.c} || beta.shape() != Shape{d.c}) {
    throw std::invalid_argument("group_norm: affine parameters must have shape (" + std::to_string(d.c) + ")");
  }
  const std::size_t per_group = d.c / groups * d.plane();
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  auto normalized = std::make_shared<Tensor<T>>(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(d.n * groups);
  Tensor<T> out(x.shape());
  for (std::size_t s = 0; s < d.n * groups; ++s) {
    const T* src = xv.data() + s * per_group;
    T mean{0};
    for (std::size_t k = 0; k < per_group; ++k) mean += src[k];
    mean /= static_cast<T>(per_group);
    T var{0};
    for (std::size_t k = 0; k < per_group; ++k) var += (src[k] - mean) * (src[k] - mean);
    var /= static_cast<T>(per_group);
    const T istd = T{1} / std::sqrt(var + static_cast<T>(kGroupNormEps));
    (*inv_std)[s] = istd;
    T* xh = normalized->data() + s * per_group;
    for (std::size_t k = 0; k < per_group; ++k) xh[k] = (src[k] - mean) * istd;
  }
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t base = (n * d.c + c) * d.plane();
      for (std::size_t k = 0; k < d.plane(); ++k) out[base + k] = gv[c] * (*normalized)[base + k] + bv[c];
    }
  }
  return x.graph().record(
      "group_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, d, groups, per_group, normalized, inv_std](Graph<T>& g, const Tensor<T>& grad) {
        const auto& xh = *normalized;
        if (auto* t = g.grad_target(gamma)) {
          for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t base = (n * d.c + c) * d.plane();
              for (std::size_t k = 0; k < d.plane(); ++k) (*t)[c] += grad[base + k] * xh[base + k];
            }
          }
        }
        if (auto* t = g.grad_target(beta)) {
          for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t c = 0; c < d.c; ++c) {
              const std::size_t base = (n * d.c + c) * d.plane();
              for (std::size_t k = 0; k < d.plane(); ++k) (*t)[c] += grad[base + k];
            }
          }
        }
        auto* t = g.grad_target(x);
        if (!t) return;
        const auto& gv = g.value(gamma);
        const std::size_t channels_per_group = d.c / groups;
        std::vector<T> dxh(per_group);
        for (std::size_t s = 0; s < d.n * groups; ++s) {
          const std::size_t base = s * per_group;
          const std::size_t first_channel = (s % groups) * channels_per_group;
          T mean_d{0}, mean_dx{0};
          for (std::size_t k = 0; k < per_group; ++k) {
            dxh[k] = grad[base + k] * gv[first_channel + k / d.plane()];
            mean_d += dxh[k];
            mean_dx += dxh[k] * xh[base + k];
          }
          mean_d /= static_cast<T>(per_group);
          mean_dx /= static_cast<T>(per_group);
          const T istd = (*inv_std)[s];
          for (std::size_t k = 0; k < per_group; ++k) {
            (*t)[base + k] += istd * (dxh[k] - mean_d - xh[base + k] * mean_dx);
          }
        }
      });
}

template <typename T>
Var<T> channel_attention(Var<T> x, AttentionParams<T>& p) {
  const Dims4 d = Dims4::of(x.shape());
  if (d.c != p.channels()) {
    throw std::invalid_argument("channel_attention: input has " + std::to_string(d.c) +
                                " channels, parameters expect " + std::to_string(p.channels()));
  }
  auto& g = x.graph();
  Var<T> fc1 = g.parameter(p.mlp_in);
  Var<T> fc2 = g.parameter(p.mlp_out);
  auto mlp = [&](Var<T> v) { return matmul(relu(matmul(v, fc1)), fc2); };
  Var<T> avg = reduce_mean(x, {2, 3});
  Var<T> mx = reduce_max(x, {2, 3});
  Var<T> gate = sigmoid(add(mlp(avg), mlp(mx)));
  gate = expand(reshape(gate, {d.n, d.c, 1, 1}), x.shape());
  return hadamard(x, gate);
}

template <typename T>
Var<T> spatial_attention(Var<T> x, AttentionParams<T>& p) {
  const Dims4 d = Dims4::of(x.shape());
  if (d.c != p.channels()) {
    throw std::invalid_argument("spatial_attention: input has " + std::to_string(d.c) +
                                " channels, parameters expect " + std::to_string(p.channels()));
  }
  Var<T> pooled = concat({reduce_mean(x, {1}, true), reduce_max(x, {1}, true)}, 1);
  Var<T> gate = sigmoid(conv2d(pooled, p.spatial));
  return hadamard(x, expand(gate, x.shape()));
}

#define UNETV2_INSTANTIATE_NN(T)                                                                        \
  template struct Conv2dParams<T>;                                                                      \
  template struct AttentionParams<T>;                                                                   \
  template Var<T> conv2d(Var<T>, Var<T>, std::type_identity_t<std::optional<Var<T>>>, std::size_t, std::size_t);              \
  template Var<T> conv2d(Var<T>, Conv2dParams<T>&);                                                     \
  template Var<T> max_pool2d(Var<T>);                                                                   \
  template Var<T> adaptive_avg_pool2d(Var<T>, Extent2);                                                 \
  template Var<T> bilinear_resize(Var<T>, Extent2);                                                     \
  template Var<T> group_norm(Var<T>, std::size_t, Var<T>, Var<T>);                                      \
  template Var<T> channel_attention(Var<T>, AttentionParams<T>&);                                       \
  template Var<T> spatial_attention(Var<T>, AttentionParams<T>&);                                       \
  template Tensor<T> kernels::adaptive_avg_pool2d(const Tensor<T>&, Extent2);                           \
  template Tensor<T> kernels::bilinear_resize(const Tensor<T>&, Extent2);

UNETV2_INSTANTIATE_NN(float)
UNETV2_INSTANTIATE_NN(double)

}  // namespace unetv2
