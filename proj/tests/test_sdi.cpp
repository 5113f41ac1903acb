#include "oracles.hpp"
#include "unetv2/model.hpp"
#include "unetv2/nn.hpp"
#include "unetv2/ops.hpp"
#include "unetv2/sdi.hpp"

#include <doctest.h>

using namespace unetv2;
using T = Tensor<double>;

namespace {

SdiConfig config_of(std::vector<std::size_t> channels, std::size_t c) {
  SdiConfig cfg;
  cfg.in_channels = std::move(channels);
  cfg.fusion_channels = c;
  return cfg;
}

std::vector<T> pyramid_values(const std::vector<std::size_t>& channels, std::size_t top, std::size_t n,
                              std::uint64_t seed) {
  std::vector<T> out;
  for (std::size_t i = 0, h = top; i < channels.size(); ++i, h /= 2) {
    out.push_back(oracle::random_normal({n, channels[i], h, h}, seed + i));
  }
  return out;
}

FeaturePyramid<double> pyramid_of(Graph<double>& g, const std::vector<T>& values, bool variables = false) {
  FeaturePyramid<double> f;
  for (const auto& v : values) f.levels.push_back(variables ? g.variable(v) : g.constant(v));
  return f;
}

void randomize_biases(SdiParams<double>& p, Rng& rng) {
  for (auto* q : p.parameters()) {
    if (q->name.find(".bias") != std::string::npos) {
      for (auto& v : q->value.values()) v = normal(rng);
    }
  }
}

}  // namespace

TEST_CASE("shape law on the reference pyramid") {
  const std::vector<std::size_t> channels{32, 64, 160, 256};
  Rng rng(1);
  auto p = SdiParams<double>::create(config_of(channels, 32), rng);
  Graph<double> g;
  const auto out = sdi_forward(pyramid_of(g, pyramid_values(channels, 64, 1, 10)), p);
  REQUIRE(out.size() == 4);
  CHECK(out.levels[0].shape() == Shape{1, 32, 64, 64});
  CHECK(out.levels[1].shape() == Shape{1, 32, 32, 32});
  CHECK(out.levels[2].shape() == Shape{1, 32, 16, 16});
  CHECK(out.levels[3].shape() == Shape{1, 32, 8, 8});
  CHECK(SdiConfig{}.fusion_channels == 32);
}

TEST_CASE("attend_and_project") {
  const std::vector<std::size_t> channels{3, 5, 8};
  Rng rng(2);
  auto p = SdiParams<double>::create(config_of(channels, 6), rng);
  const auto values = pyramid_values(channels, 8, 2, 20);

  Graph<double> g;
  const auto f2 = attend_and_project(pyramid_of(g, values), p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(f2.levels[i].shape() == Shape{2, 6, std::size_t{8} >> i, std::size_t{8} >> i});

  randomize_biases(p, rng);
  for (auto& a : p.attention)
    for (auto* q : a.parameters()) q->value.fill(0);
  Graph<double> h;
  const auto gated = attend_and_project(pyramid_of(h, values), p);
  for (std::size_t i = 0; i < 3; ++i) {
    T quarter = values[i];
    for (auto& v : quarter.values()) v *= 0.25;
    CHECK(bitwise_equal(gated.levels[i].value(), conv2d(h.constant(quarter), p.projection[i]).value()));
  }

  auto wrong = values;
  wrong.pop_back();
  Graph<double> k;
  CHECK_THROWS_AS(attend_and_project(pyramid_of(k, wrong), p), std::invalid_argument);
  wrong = values;
  wrong[1] = T({2, 4, 4, 4});
  CHECK_THROWS_AS(attend_and_project(pyramid_of(k, wrong), p), std::invalid_argument);
}

TEST_CASE("resize_to_level") {
  Graph<double> g;
  const T x = oracle::random_normal({1, 2, 4, 4}, 3);
  auto v = g.constant(x);
  CHECK(bitwise_equal(resize_to_level(v, 1, 1, 3, Extent2{4, 4}).value(), x));

  auto c = g.constant(T({1, 2, 4, 4}, 1.5));
  const auto down = resize_to_level(c, 2, 1, 3, Extent2{2, 2}).value();
  CHECK(down.shape() == Shape{1, 2, 2, 2});
  for (double d : down.values()) CHECK(d == 1.5);
  const auto up = resize_to_level(c, 0, 1, 3, Extent2{8, 8}).value();
  CHECK(up.shape() == Shape{1, 2, 8, 8});
  for (double u : up.values()) CHECK(u == 1.5);

  // finer source pools, coarser source interpolates
  CHECK(bitwise_equal(resize_to_level(v, 2, 1, 3, Extent2{2, 2}).value(),
                      oracle::adaptive_avg_pool2d(x, 2, 2)));
  CHECK(bitwise_equal(resize_to_level(v, 0, 1, 3, Extent2{8, 8}).value(), oracle::bilinear_resize(x, 8, 8)));

  CHECK_THROWS_AS(resize_to_level(v, 3, 1, 3, Extent2{1, 1}), std::out_of_range);
  CHECK_THROWS_AS(resize_to_level(v, 0, 3, 3, Extent2{8, 8}), std::out_of_range);
}

TEST_CASE("smooth") {
  Rng rng(4);
  auto k = Conv2dParams<double>::create("theta", 3, 3, 3, 1, 1, true, rng);
  const T x = oracle::random_integers({2, 3, 5, 5}, 5);
  Graph<double> g;
  auto out = smooth(g.constant(x), k);
  CHECK(out.shape() == x.shape());

  for (auto& v : k.bias->value.values()) v = static_cast<double>(uniform_int(rng, -3, 3));
  for (auto& v : k.weight.value.values()) v = static_cast<double>(uniform_int(rng, -3, 3));
  CHECK(bitwise_equal(smooth(g.constant(x), k).value(), oracle::conv2d(x, k.weight.value, k.bias->value, 1, 1)));

  k.weight.value.fill(0);
  k.bias->value.fill(0);
  for (std::size_t c = 0; c < 3; ++c) k.weight.value(c, c, 1, 1) = 1;
  CHECK(bitwise_equal(smooth(g.constant(x), k).value(), x));

  auto wrong = Conv2dParams<double>::create("bad", 3, 3, 1, 1, 0, true, rng);
  CHECK_THROWS_AS(smooth(g.constant(x), wrong), std::invalid_argument);
  auto strided = Conv2dParams<double>::create("bad", 3, 3, 3, 2, 1, true, rng);
  CHECK_THROWS_AS(smooth(g.constant(x), strided), std::invalid_argument);
  auto widen = Conv2dParams<double>::create("bad", 3, 4, 3, 1, 1, true, rng);
  CHECK_THROWS_AS(smooth(g.constant(x), widen), std::invalid_argument);
}

TEST_CASE("fuse") {
  Graph<double> g;
  const Shape s{1, 2, 3, 3};
  std::vector<Var<double>> ones{g.constant(T(s, 1.0)), g.constant(T(s, 1.0)), g.constant(T(s, 1.0))};
  for (double v : fuse<double>(ones).value().values()) CHECK(v == 1);

  std::vector<T> row{oracle::random_integers(s, 1), oracle::random_integers(s, 2), oracle::random_integers(s, 3)};
  row[1][4] = 0;
  std::vector<Var<double>> vars;
  for (const auto& r : row) vars.push_back(g.constant(r));
  const auto fused = fuse<double>(vars).value();
  CHECK(bitwise_equal(fused, oracle::product(row)));
  CHECK(fused[4] == 0);

  std::vector<Var<double>> permuted{vars[2], vars[0], vars[1]};
  CHECK(bitwise_equal(fuse<double>(permuted).value(), fused));

  std::vector<Var<double>> single{vars[0]};
  CHECK(bitwise_equal(fuse<double>(single).value(), row[0]));

  std::vector<Var<double>> mismatched{vars[0], g.constant(T({1, 2, 3, 4}))};
  CHECK_THROWS_AS(fuse<double>(mismatched), std::invalid_argument);
  CHECK_THROWS_AS(fuse<double>(std::span<const Var<double>>{}), std::invalid_argument);
}

TEST_CASE("zero-annihilation") {
  const std::vector<std::size_t> channels{2, 3, 4};
  for (std::size_t j = 0; j < 3; ++j) {
    Rng rng(30 + j);
    auto p = SdiParams<double>::create(config_of(channels, 3), rng);
    auto values = pyramid_values(channels, 8, 2, 40);
    values[j].fill(0);
    Graph<double> g;
    const auto out = sdi_forward(pyramid_of(g, values), p);
    for (std::size_t i = 0; i < 3; ++i) {
      for (double v : out.levels[i].value().values()) CHECK(v == 0);
    }
  }
}

TEST_CASE("single-level degeneration") {
  Rng rng(5);
  auto p = SdiParams<double>::create(config_of({4}, 3), rng);
  randomize_biases(p, rng);
  const auto values = pyramid_values({4}, 6, 2, 50);
  Graph<double> g;
  const auto out = sdi_forward(pyramid_of(g, values), p);
  REQUIRE(out.size() == 1);
  auto manual = conv2d(channel_attention(spatial_attention(g.constant(values[0]), p.attention[0]), p.attention[0]),
                       p.projection[0]);
  CHECK(bitwise_equal(out.levels[0].value(), smooth(manual, p.smoothing_kernel(0, 0)).value()));
}

TEST_CASE("gradients reach every input level") {
  const std::vector<std::size_t> channels{2, 3, 4, 5};
  Rng rng(6);
  auto p = SdiParams<double>::create(config_of(channels, 3), rng);
  randomize_biases(p, rng);
  Graph<double> g;
  const auto f0 = pyramid_of(g, pyramid_values(channels, 16, 1, 60), true);
  const auto out = sdi_forward(f0, p);
  Var<double> total = sum_all(out.levels[0]);
  for (std::size_t i = 1; i < out.size(); ++i) total = add(total, sum_all(out.levels[i]));
  g.backward(total);
  for (std::size_t j = 0; j < channels.size(); ++j) {
    const T* grad = g.grad(f0.levels[j]);
    REQUIRE(grad != nullptr);
    bool nonzero = false;
    for (double v : grad->values()) nonzero = nonzero || v != 0;
    CHECK(nonzero);
  }
}

TEST_CASE("parameter count closed form") {
  for (const auto& channels : {std::vector<std::size_t>{32, 64, 160, 256}, std::vector<std::size_t>{4, 8, 8},
                               std::vector<std::size_t>{24}}) {
    for (std::size_t c : {1, 4, 32}) {
      for (bool attention : {true, false}) {
        SdiConfig cfg = config_of(channels, c);
        cfg.attention = attention;
        Rng rng(7);
        auto p = SdiParams<double>::create(cfg, rng);
        const std::size_t m = channels.size();
        std::size_t expected = m * m * (9 * c * c + c);
        for (std::size_t ci : channels) expected += (attention ? attention_param_count(ci) : 0) + ci * c + c;
        CHECK(sdi_param_count(cfg) == expected);
        CHECK(count_params(p.parameters()) == expected);
        CHECK(p.smoothing.size() == m * m);
      }
    }
  }
  // attention term for the reference pyramid, spelled out: 2*C*(C/r) + 7*7*2 + 1
  CHECK(attention_param_count(160) == 2 * 160 * 10 + 99);
}

TEST_CASE("shared smoothing toggle") {
  SdiConfig cfg = config_of({2, 3, 4}, 3);
  cfg.shared_smoothing = true;
  Rng rng(8);
  auto p = SdiParams<double>::create(cfg, rng);
  CHECK(p.smoothing.size() == 3);
  CHECK(&p.smoothing_kernel(1, 0) == &p.smoothing_kernel(1, 2));
  CHECK(&p.smoothing_kernel(0, 0) != &p.smoothing_kernel(1, 0));
  CHECK(count_params(p.parameters()) == sdi_param_count(cfg));
  CHECK_THROWS_AS(p.smoothing_kernel(3, 0), std::out_of_range);
  Graph<double> g;
  CHECK(sdi_forward(pyramid_of(g, pyramid_values({2, 3, 4}, 8, 1, 70)), p).levels[2].shape() == Shape{1, 3, 2, 2});
}

TEST_CASE("pyramid validation") {
  Rng rng(9);
  auto p = SdiParams<double>::create(config_of({2, 3}, 2), rng);
  Graph<double> g;
  FeaturePyramid<double> bad;
  bad.levels = {g.constant(T({1, 2, 8, 8})), g.constant(T({1, 3, 3, 3}))};
  CHECK_THROWS_AS(sdi_forward(bad, p), std::invalid_argument);
  bad.levels = {g.constant(T({1, 2, 8, 8})), g.constant(T({2, 3, 4, 4}))};
  CHECK_THROWS_AS(sdi_forward(bad, p), std::invalid_argument);
}
