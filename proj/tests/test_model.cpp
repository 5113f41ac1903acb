#include "oracles.hpp"
#include "unetv2/model.hpp"
#include "unetv2/ops.hpp"

#include <doctest.h>

#include <set>

using namespace unetv2;
using T = Tensor<double>;

namespace {

ModelConfig toy(std::size_t levels = 3) {
  ModelConfig cfg;
  cfg.levels = levels;
  cfg.fusion_channels = 4;
  cfg.encoder_channels.clear();
  for (std::size_t i = 0; i < levels; ++i) cfg.encoder_channels.push_back(4 * (i + 1));
  cfg.norm_groups = 2;
  return cfg;
}

bool all_finite_values(const T& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_CASE("encoder pyramid geometry") {
  SUBCASE("reference 256 input") {
    ModelConfig cfg;
    cfg.encoder_channels = {4, 4, 4, 4};
    cfg.norm_groups = 2;
    UNetV2<float> model(cfg, 1);
    Graph<float> g;
    const auto f = model.encode(g.constant(Tensor<float>({1, 3, 256, 256})));
    REQUIRE(f.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f.levels[i].shape() == Shape{1, 4, 64u >> i, 64u >> i});
  }
  SUBCASE("level count follows M") {
    for (std::size_t m : {2, 3, 4, 5}) {
      auto cfg = toy(m);
      UNetV2<double> model(cfg, 2);
      const std::size_t side = cfg.input_divisor();
      Graph<double> g;
      const auto f = model.encode(g.constant(oracle::random_normal({1, 3, side, side}, m)));
      REQUIRE(f.size() == m);
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(f.levels[i].shape() == Shape{1, cfg.encoder_channels[i], side >> (i + 2), side >> (i + 2)});
      }
    }
  }
  SUBCASE("divisibility") {
    auto cfg = toy();
    CHECK(cfg.input_divisor() == 16);
    UNetV2<double> model(cfg, 3);
    Graph<double> g;
    CHECK_THROWS_AS(model.forward(g.constant(T({1, 3, 24, 24}))), std::invalid_argument);
    CHECK_THROWS_AS(model.forward(g.constant(T({1, 3, 32, 40}))), std::invalid_argument);
    CHECK_THROWS_AS(model.forward(g.constant(T({1, 2, 32, 32}))), std::invalid_argument);
  }
}

TEST_CASE("config validation") {
  auto cfg = toy();
  cfg.levels = 1;
  cfg.encoder_channels = {4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = toy();
  cfg.encoder_channels.pop_back();
  CHECK_THROWS_AS(UNetV2<double>(cfg, 1), std::invalid_argument);
  cfg = toy();
  cfg.decoder_channels = {4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.decoder_channels = {4, 6};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.decoder_width(1) == 6);

  CHECK(parse_ablation("none") == Ablation::none);
  CHECK(parse_ablation("no-sdi") == Ablation::no_sdi);
  CHECK(parse_ablation("no-sc") == Ablation::no_sc);
  CHECK_THROWS_AS(parse_ablation("w/o"), std::invalid_argument);
  for (auto a : {Ablation::none, Ablation::no_sdi, Ablation::no_sc}) CHECK(parse_ablation(to_string(a)) == a);
}

TEST_CASE("end-to-end shape law and ablations") {
  const T image = oracle::random_normal({2, 3, 32, 32}, 9);
  std::vector<std::set<std::string>> registries;
  for (auto a : {Ablation::none, Ablation::no_sdi, Ablation::no_sc}) {
    UNetV2<double> model(with_ablation(toy(), a), 4);
    Graph<double> g;
    CHECK(model.forward(g.constant(image)).shape() == Shape{2, 1, 32, 32});
    std::set<std::string> names;
    for (auto* p : model.parameters()) names.insert(p->name);
    CHECK(names.size() == model.parameters().size());
    registries.push_back(names);
  }
  CHECK(registries[0] != registries[1]);
  CHECK(registries[0] != registries[2]);
  CHECK(registries[1] != registries[2]);

  auto cfg = toy();
  cfg.decoder_channels = {5, 7};
  UNetV2<double> wide(cfg, 4);
  Graph<double> g;
  CHECK(wide.forward(g.constant(image)).shape() == Shape{2, 1, 32, 32});
}

TEST_CASE("decoder channel mismatch") {
  UNetV2<double> model(toy(), 5);
  Graph<double> g;
  FeaturePyramid<double> refined;
  refined.levels = {g.constant(T({1, 4, 8, 8})), g.constant(T({1, 3, 4, 4})), g.constant(T({1, 4, 2, 2}))};
  CHECK_THROWS_AS(model.decode(refined, Extent2{32, 32}), std::invalid_argument);
}

TEST_CASE("determinism") {
  UNetV2<double> a(toy(), 11), b(toy(), 11), c(toy(), 12);
  const T image = oracle::random_normal({1, 3, 32, 32}, 13);
  Graph<double> g1, g2, g3;
  const T ya = a.forward(g1.constant(image)).value();
  CHECK(bitwise_equal(ya, b.forward(g2.constant(image)).value()));
  CHECK_FALSE(bitwise_equal(ya, c.forward(g3.constant(image)).value()));
  Graph<double> g4;
  CHECK(bitwise_equal(ya, a.forward(g4.constant(image)).value()));

  Graph<double> g5, g6;
  const T zeros({1, 3, 32, 32});
  const T z1 = a.forward(g5.constant(zeros)).value();
  CHECK(all_finite_values(z1));
  CHECK(bitwise_equal(z1, a.forward(g6.constant(zeros)).value()));
}

TEST_CASE("state round trip") {
  UNetV2<float> a(toy(), 21), b(toy(), 22);
  b.load_state(a.state());
  Tensor<float> image({1, 3, 32, 32});
  const T source = oracle::random_normal({1, 3, 32, 32}, 23);
  for (std::size_t k = 0; k < image.size(); ++k) image[k] = static_cast<float>(source[k]);
  Graph<float> g1, g2;
  CHECK(bitwise_equal(a.forward(g1.constant(image)).value(), b.forward(g2.constant(image)).value()));

  auto state = a.state();
  state.pop_back();
  CHECK_THROWS_AS(b.load_state(state), std::invalid_argument);
  state = a.state();
  state[0].second = Tensor<float>({1});
  CHECK_THROWS_AS(b.load_state(state), std::invalid_argument);
  state = a.state();
  state[0].first = "encoder.bogus";
  CHECK_THROWS_AS(b.load_state(state), std::invalid_argument);
  UNetV2<float> other(with_ablation(toy(), Ablation::no_sdi), 1);
  CHECK_THROWS_AS(other.load_state(a.state()), std::invalid_argument);
}

TEST_CASE("parameter accounting") {
  SUBCASE("one 3x3 conv with bias") {
    for (std::size_t c : {1, 4, 32}) {
      Rng rng(1);
      auto conv = Conv2dParams<double>::create("k", c, c, 3, 1, 1, true, rng);
      CHECK(count_params(conv.parameters()) == 9 * c * c + c);
    }
  }
  SUBCASE("full minus no-sc is the attention closed form") {
    for (const auto& channels : {std::vector<std::size_t>{4, 8, 12}, std::vector<std::size_t>{32, 64, 128, 256}}) {
      ModelConfig cfg;
      cfg.levels = channels.size();
      cfg.encoder_channels = channels;
      cfg.norm_groups = 4;
      UNetV2<float> full(cfg, 1), no_sc(with_ablation(cfg, Ablation::no_sc), 1);
      std::size_t attention = 0;
      for (std::size_t ch : channels) attention += attention_param_count(ch);
      CHECK(count_params(full.parameters()) - count_params(no_sc.parameters()) == attention);
      CHECK(full.param_breakdown().total() == count_params(full.parameters()));
      CHECK(full.param_breakdown().skip == sdi_param_count(cfg.sdi_config()));
    }
  }
  SUBCASE("no-sdi skip is the plain projection") {
    auto cfg = with_ablation(toy(), Ablation::no_sdi);
    UNetV2<double> model(cfg, 1);
    std::size_t expected = 0;
    for (std::size_t ch : cfg.encoder_channels) expected += ch * cfg.fusion_channels + cfg.fusion_channels;
    CHECK(model.param_breakdown().skip == expected);
  }
}

TEST_CASE("flop closed forms") {
  CHECK(flops::conv2d(1, 3, 8, 1, 4, 4, false) == 768);
  CHECK(flops::conv2d(1, 3, 8, 1, 4, 4, true) == 768 + 16 * 8);
  CHECK(flops::matmul(2, 3, 4) == 48);

  // conv3x3 3->4 on 8x8 without bias, relu, conv1x1 4->1 with bias
  const flops::Count two_layer =
      flops::conv2d(1, 3, 4, 3, 8, 8, false) + flops::relu(4 * 8 * 8) + flops::conv2d(1, 4, 1, 1, 8, 8, true);
  CHECK(two_layer == 4 * 64 * 54 + 256 + 64 * 9);
  CHECK(two_layer == 14656);
}

TEST_CASE("estimate_flops laws") {
  for (auto a : {Ablation::none, Ablation::no_sdi, Ablation::no_sc}) {
    const auto cfg = with_ablation(toy(), a);
    const auto one = estimate_flops(cfg, 1, 32, 32);
    CHECK(one.total() == one.encoder + one.skip + one.decoder + one.head);
    for (std::size_t n : {2, 5}) {
      const auto many = estimate_flops(cfg, n, 32, 32);
      CHECK(many.encoder == n * one.encoder);
      CHECK(many.skip == n * one.skip);
      CHECK(many.decoder == n * one.decoder);
      CHECK(many.head == n * one.head);
    }
    const auto doubled = estimate_flops(cfg, 1, 64, 64);
    // every conv and per-element term is per pixel; the attention MLP is not
    CHECK(doubled.encoder == 4 * one.encoder);
    CHECK(doubled.decoder == 4 * one.decoder);
    CHECK(doubled.head == 4 * one.head);
    if (a == Ablation::no_sdi) CHECK(doubled.skip == 4 * one.skip);
  }
  const auto full = estimate_flops(toy(), 1, 32, 32);
  const auto no_sc = estimate_flops(with_ablation(toy(), Ablation::no_sc), 1, 32, 32);
  const auto no_sdi = estimate_flops(with_ablation(toy(), Ablation::no_sdi), 1, 32, 32);
  CHECK(full.encoder == no_sdi.encoder);
  CHECK(full.skip > no_sc.skip);
  CHECK(no_sc.skip > no_sdi.skip);
  CHECK_THROWS_AS(estimate_flops(toy(), 1, 24, 24), std::invalid_argument);
}

TEST_CASE("estimate_flops hand count on a two-level net") {
  ModelConfig cfg;
  cfg.levels = 2;
  cfg.fusion_channels = 2;
  cfg.encoder_channels = {2, 2};
  cfg.stem_halvings = 0;
  cfg.norm_groups = 1;
  cfg.sdi_enabled = false;
  // 4x4 input, levels at 4x4 and 2x2
  auto conv_block = [](flops::Count cin, flops::Count cout, flops::Count h) {
    return flops::conv2d(1, cin, cout, 3, h, h, false) + flops::group_norm(cout * h * h) + flops::relu(cout * h * h);
  };
  const flops::Count encoder = conv_block(3, 2, 4) + 2 * conv_block(2, 2, 4) + flops::max_pool2d(2 * 2 * 2) +
                               2 * conv_block(2, 2, 2);
  const flops::Count skip = flops::conv2d(1, 2, 2, 1, 4, 4, true) + flops::conv2d(1, 2, 2, 1, 2, 2, true);
  const flops::Count decoder = flops::bilinear_resize(2 * 4 * 4) + conv_block(4, 2, 4);
  const flops::Count head = flops::bilinear_resize(2 * 4 * 4) + flops::conv2d(1, 2, 1, 1, 4, 4, true);
  const auto r = estimate_flops(cfg, 1, 4, 4);
  CHECK(r.encoder == encoder);
  CHECK(r.skip == skip);
  CHECK(r.decoder == decoder);
  CHECK(r.head == head);
}
