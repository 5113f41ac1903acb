#include "unetv2/gradcheck.hpp"

#include "unetv2/loss.hpp"
#include "unetv2/model.hpp"
#include "unetv2/nn.hpp"
#include "unetv2/ops.hpp"
#include "unetv2/random.hpp"
#include "unetv2/sdi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unetv2 {
namespace {

using D = double;

Tensor<D> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, double offset = 0.0) {
  Tensor<D> t(shape);
  for (auto& v : t.values()) v = offset + scale * normal(rng);
  return t;
}

/// sum(out * W) with W a fixed pseudo-random tensor, so the upstream gradient is generic.
Var<D> weighted_sum(Var<D> out, std::uint64_t salt) {
  Rng rng(splitmix64(salt ^ 0xabcdef));
  return sum_all(hadamard(out, out.graph().constant(random_tensor(out.shape(), rng))));
}

std::vector<std::size_t> probe_coords(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (limit == 0 || limit >= size) return all;
  for (std::size_t i = 0; i < limit; ++i) {
    std::swap(all[i], all[static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(size) - 1))]);
  }
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

/// Leaf inputs of an operator case, wrapped as parameters.
struct Inputs {
  std::vector<Parameter<D>> params;

  Inputs(std::initializer_list<Tensor<D>> tensors) {
    for (const auto& t : tensors) params.emplace_back("in" + std::to_string(params.size()), t);
  }
  std::vector<Parameter<D>*> pointers() {
    std::vector<Parameter<D>*> out;
    for (auto& p : params) out.push_back(&p);
    return out;
  }
  std::vector<Var<D>> bind(Graph<D>& g) {
    std::vector<Var<D>> out;
    for (auto& p : params) out.push_back(g.parameter(p));
    return out;
  }
};

using OpFn = std::function<Var<D>(std::vector<Var<D>>&)>;

GradcheckResult check_op(const std::string& name, Inputs inputs, const OpFn& op, std::uint64_t seed,
                         const GradcheckOptions& options) {
  auto targets = inputs.pointers();
  return check_gradients(
      name, targets,
      [&](Graph<D>& g) {
        auto vars = inputs.bind(g);
        return weighted_sum(op(vars), seed);
      },
      options);
}

struct Case {
  std::string name;
  std::function<GradcheckResult(std::uint64_t, const GradcheckOptions&)> run;
};

std::vector<Case> op_cases() {
  std::vector<Case> cases;
  auto unary = [&cases](std::string name, Shape shape, std::function<Var<D>(Var<D>)> f, double scale = 1.0,
                        double offset = 0.0) {
    cases.push_back({name, [=](std::uint64_t seed, const GradcheckOptions& o) {
                       Rng rng(seed);
                       return check_op(name, Inputs{random_tensor(shape, rng, scale, offset)},
                                       [&](std::vector<Var<D>>& v) { return f(v[0]); }, seed, o);
                     }});
  };
  auto binary = [&cases](std::string name, Shape sa, Shape sb, std::function<Var<D>(Var<D>, Var<D>)> f,
                         double b_offset = 0.0) {
    cases.push_back({name, [=](std::uint64_t seed, const GradcheckOptions& o) {
                       Rng rng(seed);
                       Tensor<D> a = random_tensor(sa, rng);
                       Tensor<D> b = random_tensor(sb, rng, 1.0, b_offset);
                       if (b_offset != 0) {
                         for (auto& v : b.values()) v = b_offset + std::abs(v);
                       }
                       return check_op(name, Inputs{a, b}, [&](std::vector<Var<D>>& v) { return f(v[0], v[1]); },
                                       seed, o);
                     }});
  };

  binary("add", {3, 4}, {3, 4}, [](Var<D> a, Var<D> b) { return add(a, b); });
  binary("sub", {3, 4}, {3, 4}, [](Var<D> a, Var<D> b) { return sub(a, b); });
  binary("hadamard", {3, 4}, {3, 4}, [](Var<D> a, Var<D> b) { return hadamard(a, b); });
  binary("divide", {3, 4}, {3, 4}, [](Var<D> a, Var<D> b) { return divide(a, b); }, 1.5);
  unary("scale", {3, 4}, [](Var<D> x) { return scale(x, -2.5); });
  unary("add_scalar", {3, 4}, [](Var<D> x) { return add_scalar(x, 0.75); });
  binary("matmul", {4, 5}, {5, 3}, [](Var<D> a, Var<D> b) { return matmul(a, b); });
  unary("relu", {4, 6}, [](Var<D> x) { return relu(x); });
  unary("sigmoid", {4, 6}, [](Var<D> x) { return sigmoid(x); }, 2.0);
  cases.push_back({"bce_with_logits", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     Tensor<D> target({4, 6});
                     for (auto& v : target.values()) v = uniform01(rng) < 0.5 ? 0.0 : 1.0;
                     return check_op("bce_with_logits", Inputs{random_tensor({4, 6}, rng, 2.0)},
                                     [&](std::vector<Var<D>>& v) {
                                       return bce_with_logits(v[0], v[0].graph().constant(target));
                                     },
                                     seed, o);
                   }});
  unary("reduce_sum", {2, 3, 4}, [](Var<D> x) { return reduce_sum(x, {0, 2}); });
  unary("reduce_mean", {2, 3, 4}, [](Var<D> x) { return reduce_mean(x, {1, 2}, true); });
  unary("reduce_max", {2, 3, 4}, [](Var<D> x) { return reduce_max(x, {2}); });
  unary("sum_all", {3, 5}, [](Var<D> x) { return scale(sum_all(x), 1.0); });
  unary("mean_all", {3, 5}, [](Var<D> x) { return mean_all(x); });
  binary("concat", {2, 3, 2}, {2, 1, 2}, [](Var<D> a, Var<D> b) { return concat({a, b}, 1); });
  unary("slice", {3, 6}, [](Var<D> x) { return slice(x, 1, 1, 4); });
  unary("split", {4, 5}, [](Var<D> x) {
    const std::size_t sizes[] = {1, 3};
    auto parts = split(x, 0, sizes);
    return hadamard(parts[0], slice(parts[1], 0, 2, 3));
  });
  unary("reshape", {2, 6}, [](Var<D> x) { return reshape(x, {3, 4}); });
  unary("expand", {2, 1, 3}, [](Var<D> x) { return expand(x, {2, 4, 3}); });

  cases.push_back({"conv2d", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     const std::size_t stride = 1 + seed % 2;
                     return check_op("conv2d",
                                     Inputs{random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                            random_tensor({3}, rng)},
                                     [&](std::vector<Var<D>>& v) { return conv2d(v[0], v[1], v[2], stride, 1); },
                                     seed, o);
                   }});
  unary("max_pool2d", {1, 2, 4, 6}, [](Var<D> x) { return max_pool2d(x); });
  unary("adaptive_avg_pool2d", {1, 2, 5, 7}, [](Var<D> x) { return adaptive_avg_pool2d(x, {3, 4}); });
  unary("bilinear_resize", {1, 2, 3, 4}, [](Var<D> x) { return bilinear_resize(x, {5, 7}); });
  cases.push_back({"group_norm", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     return check_op("group_norm",
                                     Inputs{random_tensor({2, 4, 2, 3}, rng), random_tensor({4}, rng, 0.5, 1.0),
                                            random_tensor({4}, rng)},
                                     [](std::vector<Var<D>>& v) { return group_norm(v[0], 2, v[1], v[2]); }, seed,
                                     o);
                   }});
  auto attention_case = [&cases](std::string name, bool channel) {
    cases.push_back({name, [=](std::uint64_t seed, const GradcheckOptions& o) {
                       Rng rng(seed);
                       auto p = AttentionParams<D>::create("attn", 4, rng);
                       for (auto* q : p.parameters()) {
                         for (auto& v : q->value.values()) v = normal(rng);
                       }
                       Parameter<D> x("x", random_tensor({1, 4, 4, 4}, rng));
                       auto targets = p.parameters();
                       targets.push_back(&x);
                       return check_gradients(
                           name, targets,
                           [&](Graph<D>& g) {
                             Var<D> in = g.parameter(x);
                             return weighted_sum(channel ? channel_attention(in, p) : spatial_attention(in, p), seed);
                           },
                           o);
                     }});
  };
  attention_case("channel_attention", true);
  attention_case("spatial_attention", false);
  cases.push_back({"dice_bce_loss", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     Tensor<D> target({2, 1, 4, 4});
                     for (auto& v : target.values()) v = uniform01(rng) < 0.4 ? 1.0 : 0.0;
                     Inputs in{random_tensor({2, 1, 4, 4}, rng, 2.0)};
                     auto targets = in.pointers();
                     return check_gradients(
                         "dice_bce_loss", targets,
                         [&](Graph<D>& g) {
                           auto v = in.bind(g);
                           return dice_bce_loss(v[0], g.constant(target));
                         },
                         o);
                   }});
  return cases;
}

/// Random (non-default) parameter values so that zero-initialized biases are exercised.
void randomize(std::span<Parameter<D>* const> params, Rng& rng, double scale) {
  for (auto* p : params) {
    for (auto& v : p->value.values()) v = scale * normal(rng);
  }
}

std::vector<Case> sdi_cases() {
  std::vector<Case> cases;
  struct Setup {
    SdiParams<D> params;
    std::vector<Parameter<D>> inputs;
  };
  auto setup = [](std::uint64_t seed, std::vector<std::size_t> channels, std::size_t c, std::size_t top) {
    Rng rng(seed);
    SdiConfig cfg;
    cfg.in_channels = channels;
    cfg.fusion_channels = c;
    Setup s{SdiParams<D>::create(cfg, rng), {}};
    randomize(s.params.parameters(), rng, 0.5);
    std::size_t h = top;
    for (std::size_t i = 0; i < channels.size(); ++i, h /= 2) {
      s.inputs.emplace_back("f" + std::to_string(i), random_tensor({1, channels[i], h, h}, rng));
    }
    return s;
  };
  auto all_targets = [](Setup& s) {
    auto t = s.params.parameters();
    for (auto& p : s.inputs) t.push_back(&p);
    return t;
  };
  auto pyramid = [](Graph<D>& g, Setup& s) {
    FeaturePyramid<D> f;
    for (auto& p : s.inputs) f.levels.push_back(g.parameter(p));
    return f;
  };

  cases.push_back({"attend_and_project", [=](std::uint64_t seed, const GradcheckOptions& o) {
                     Setup s = setup(seed, {2, 3, 4}, 2, 8);
                     auto targets = all_targets(s);
                     // smoothing kernels take no part in this stage
                     std::erase_if(targets, [](auto* p) { return p->name.find("smooth") != std::string::npos; });
                     return check_gradients(
                         "attend_and_project", targets,
                         [&](Graph<D>& g) {
                           auto out = attend_and_project(pyramid(g, s), s.params);
                           Var<D> total = weighted_sum(out.levels[0], seed);
                           for (std::size_t i = 1; i < out.levels.size(); ++i) total = add(total, weighted_sum(out.levels[i], seed + i));
                           return total;
                         },
                         o);
                   }});
  cases.push_back({"resize_to_level", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     Inputs in{random_tensor({1, 2, 4, 4}, rng)};
                     return check_op("resize_to_level", std::move(in),
                                     [](std::vector<Var<D>>& v) {
                                       Var<D> down = resize_to_level(v[0], 2, 1, 3, Extent2{2, 2});
                                       Var<D> up = resize_to_level(v[0], 0, 1, 3, Extent2{8, 8});
                                       return add(reshape(down, {8}), reshape(slice(reshape(up, {128}), 0, 0, 8), {8}));
                                     },
                                     seed, o);
                   }});
  cases.push_back({"smooth", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     auto kernel = Conv2dParams<D>::create("theta", 2, 2, 3, 1, 1, true, rng);
                     randomize(kernel.parameters(), rng, 0.5);
                     Parameter<D> x("x", random_tensor({1, 2, 4, 4}, rng));
                     auto targets = kernel.parameters();
                     targets.push_back(&x);
                     return check_gradients(
                         "smooth", targets,
                         [&](Graph<D>& g) { return weighted_sum(smooth(g.parameter(x), kernel), seed); }, o);
                   }});
  cases.push_back({"fuse", [](std::uint64_t seed, const GradcheckOptions& o) {
                     Rng rng(seed);
                     return check_op("fuse",
                                     Inputs{random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng),
                                            random_tensor({1, 2, 3, 3}, rng)},
                                     [](std::vector<Var<D>>& v) { return fuse<D>(v); }, seed, o);
                   }});
  cases.push_back({"sdi_forward", [=](std::uint64_t seed, const GradcheckOptions& o) {
                     Setup s = setup(seed, {2, 3, 4}, 2, 8);
                     auto targets = all_targets(s);
                     return check_gradients(
                         "sdi_forward", targets,
                         [&](Graph<D>& g) {
                           auto out = sdi_forward(pyramid(g, s), s.params);
                           Var<D> total = weighted_sum(out.levels[0], seed);
                           for (std::size_t i = 1; i < out.levels.size(); ++i) total = add(total, weighted_sum(out.levels[i], seed + i));
                           return total;
                         },
                         o);
                   }});
  return cases;
}

ModelConfig toy_model() {
  ModelConfig cfg;
  cfg.levels = 3;
  cfg.fusion_channels = 4;
  cfg.encoder_channels = {4, 8, 8};
  cfg.norm_groups = 2;
  return cfg;
}

std::vector<Parameter<D>*> with_prefix(std::vector<Parameter<D>*> all, std::initializer_list<const char*> prefixes) {
  std::erase_if(all, [&](Parameter<D>* p) {
    return std::none_of(prefixes.begin(), prefixes.end(), [&](const char* pre) { return p->name.rfind(pre, 0) == 0; });
  });
  return all;
}

std::vector<Case> model_cases() {
  std::vector<Case> cases;
  cases.push_back({"encoder_forward", [](std::uint64_t seed, const GradcheckOptions& o) {
                     UNetV2<D> model(toy_model(), seed);
                     Rng rng(seed);
                     Parameter<D> image("image", random_tensor({1, 3, 32, 32}, rng));
                     auto targets = with_prefix(model.parameters(), {"encoder."});
                     targets.push_back(&image);
                     return check_gradients(
                         "encoder_forward", targets,
                         [&](Graph<D>& g) {
                           auto levels = model.encode(g.parameter(image)).levels;
                           Var<D> total = weighted_sum(levels[0], seed);
                           for (std::size_t i = 1; i < levels.size(); ++i) {
                             total = add(total, weighted_sum(levels[i], seed + i));
                           }
                           return total;
                         },
                         o);
                   }});
  cases.push_back({"decoder_forward", [](std::uint64_t seed, const GradcheckOptions& o) {
                     UNetV2<D> model(toy_model(), seed);
                     Rng rng(seed);
                     std::vector<Parameter<D>> refined;
                     for (std::size_t i = 0, h = 8; i < 3; ++i, h /= 2) {
                       refined.emplace_back("f5_" + std::to_string(i), random_tensor({1, 4, h, h}, rng));
                     }
                     auto targets = with_prefix(model.parameters(), {"decoder.", "head"});
                     for (auto& p : refined) targets.push_back(&p);
                     return check_gradients(
                         "decoder_forward", targets,
                         [&](Graph<D>& g) {
                           FeaturePyramid<D> f;
                           for (auto& p : refined) f.levels.push_back(g.parameter(p));
                           return weighted_sum(model.decode(f, {32, 32}), seed);
                         },
                         o);
                   }});
  cases.push_back({"unetv2_forward", [](std::uint64_t seed, const GradcheckOptions& o) {
                     UNetV2<D> model(toy_model(), seed);
                     Rng rng(seed);
                     // move the zero-initialized biases and unit norm scales off their defaults
                     for (auto* p : model.parameters()) {
                       if (p->name.find(".bias") != std::string::npos || p->name.find(".beta") != std::string::npos) {
                         for (auto& v : p->value.values()) v = 0.1 * normal(rng);
                       }
                     }
                     Parameter<D> image("image", random_tensor({1, 3, 32, 32}, rng));
                     auto targets = model.parameters();
                     targets.push_back(&image);
                     return check_gradients(
                         "unetv2_forward", targets,
                         [&](Graph<D>& g) { return weighted_sum(model.forward(g.parameter(image)), seed); }, o);
                   }});
  return cases;
}

}  // namespace

GradcheckResult check_gradients(const std::string& name, std::span<Parameter<double>* const> targets,
                                const LossBuilder& loss, const GradcheckOptions& options) {
  GradcheckResult r;
  r.name = name;
  r.tolerance = options.tolerance;
  for (auto* p : targets) p->zero_grad();
  {
    Graph<D> g;
    g.backward(loss(g));
  }
  auto evaluate = [&loss]() {
    Graph<D> g;
    return loss(g).value()[0];
  };
  Rng rng(splitmix64(options.seed));
  for (auto* p : targets) {
    for (std::size_t k : probe_coords(p->value.size(), options.max_coords_per_tensor, rng)) {
      const D original = p->value[k];
      auto at = [&](D x) {
        p->value[k] = x;
        const D v = evaluate();
        p->value[k] = original;
        return v;
      };
      D eps = options.eps;
      D plus = at(original + eps), minus = at(original - eps);
      D numeric = (plus - minus) / (2 * eps);
      D err = std::abs(p->grad[k] - numeric) / std::max(1.0, std::abs(numeric));
      // A window that straddles a relu or max-pool kink shows unequal one-sided
      // slopes; shrink it instead of comparing against a meaningless difference.
      for (std::size_t retry = 0; err >= options.tolerance && retry < options.kink_retries; ++retry) {
        const D center = evaluate();
        const D right = (plus - center) / eps, left = (center - minus) / eps;
        // smooth losses keep |right - left| near eps * |f''|, far below a real mismatch
        if (std::abs(right - left) < 0.5 * std::abs(p->grad[k] - numeric)) break;
        ++r.kinks;
        eps /= 10;
        plus = at(original + eps);
        minus = at(original - eps);
        numeric = (plus - minus) / (2 * eps);
        err = std::abs(p->grad[k] - numeric) / std::max(1.0, std::abs(numeric));
      }
      r.max_rel_error = std::max(r.max_rel_error, err);
      ++r.coords;
    }
  }
  return r;
}

GradcheckScope parse_gradcheck_scope(const std::string& name) {
  if (name == "ops") return GradcheckScope::ops;
  if (name == "sdi") return GradcheckScope::sdi;
  if (name == "model") return GradcheckScope::model;
  if (name == "all") return GradcheckScope::all;
  throw std::invalid_argument("unknown gradcheck scope '" + name + "' (expected ops, sdi, model or all)");
}

std::vector<GradcheckResult> run_gradcheck_suite(GradcheckScope scope, std::size_t seeds) {
  struct Group {
    std::vector<Case> cases;
    std::size_t max_coords;
  };
  std::vector<Group> groups;
  if (scope == GradcheckScope::ops || scope == GradcheckScope::all) groups.push_back({op_cases(), 0});
  if (scope == GradcheckScope::sdi || scope == GradcheckScope::all) groups.push_back({sdi_cases(), 0});
  if (scope == GradcheckScope::model || scope == GradcheckScope::all) groups.push_back({model_cases(), 0});

  std::vector<GradcheckResult> out;
  for (const auto& group : groups) {
    for (const auto& c : group.cases) {
      GradcheckResult worst;
      worst.name = c.name;
      for (std::size_t s = 0; s < seeds; ++s) {
        GradcheckOptions o;
        o.seed = s;
        o.max_coords_per_tensor = group.max_coords;
        const auto r = c.run(1000 + s, o);
        worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
        worst.coords += r.coords;
        worst.kinks += r.kinks;
        worst.tolerance = r.tolerance;
      }
      out.push_back(worst);
    }
  }
  return out;
}

}  // namespace unetv2
