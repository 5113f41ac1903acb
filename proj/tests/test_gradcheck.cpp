#include "oracles.hpp"
#include "unetv2/gradcheck.hpp"
#include "unetv2/ops.hpp"

#include <doctest.h>

#include <map>

using namespace unetv2;

namespace {

// x^3 with a backward rule that is wrong by the given factor.
Var<double> cube(Var<double> x, double backward_factor) {
  Tensor<double> out = x.value();
  for (auto& v : out.values()) v = v * v * v;
  return x.graph().record("cube", std::move(out), {x},
                          [x, backward_factor](Graph<double>& g, const Tensor<double>& grad) {
                            if (auto* t = g.grad_target(x)) {
                              const auto& xv = g.value(x);
                              for (std::size_t k = 0; k < grad.size(); ++k) {
                                (*t)[k] += backward_factor * 3 * xv[k] * xv[k] * grad[k];
                              }
                            }
                          });
}

GradcheckResult check_cube(double factor) {
  Parameter<double> p{"x", oracle::random_normal({3, 4}, 1)};
  std::vector<Parameter<double>*> targets{&p};
  return check_gradients("cube", targets, [&](Graph<double>& g) { return sum_all(cube(g.parameter(p), factor)); });
}

}  // namespace

TEST_CASE("a correct backward rule passes") {
  const auto r = check_cube(1.0);
  CHECK(r.passed());
  CHECK(r.coords == 12);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("corrupted backward rules are detected") {
  for (double factor : {0.0, 0.5, 1.001, -1.0}) {
    const auto r = check_cube(factor);
    CHECK_FALSE(r.passed());
    CHECK(r.max_rel_error > 1e-6);
  }
}

TEST_CASE("missing gradient flow is detected") {
  Parameter<double> p{"x", oracle::random_normal({5}, 2)};
  std::vector<Parameter<double>*> targets{&p};
  const auto r = check_gradients("detached", targets, [&](Graph<double>& g) {
    // the constant copy hides x from the tape
    return sum_all(hadamard(g.constant(p.value), g.constant(p.value)));
  });
  CHECK_FALSE(r.passed());
}

TEST_CASE("probe subsets") {
  Parameter<double> p{"x", oracle::random_normal({10, 10}, 3)};
  std::vector<Parameter<double>*> targets{&p};
  GradcheckOptions o;
  o.max_coords_per_tensor = 7;
  const auto r = check_gradients("sub", targets, [&](Graph<double>& g) { return sum_all(cube(g.parameter(p), 1)); }, o);
  CHECK(r.coords == 7);
  CHECK(r.passed());
}

TEST_CASE("kinks are retried with a smaller step") {
  // relu(x) with x exactly 2e-6 away from the kink: the eps window straddles it
  Parameter<double> p{"x", Tensor<double>({2})};
  p.value[0] = 2e-6;
  p.value[1] = -3e-6;
  std::vector<Parameter<double>*> targets{&p};
  const auto r = check_gradients("relu", targets, [&](Graph<double>& g) { return sum_all(relu(g.parameter(p))); });
  CHECK(r.passed());
  CHECK(r.kinks == 2);

  GradcheckOptions strict;
  strict.kink_retries = 0;
  CHECK_FALSE(check_gradients("relu", targets, [&](Graph<double>& g) { return sum_all(relu(g.parameter(p))); },
                              strict)
                  .passed());
}

TEST_CASE("suite coverage") {
  CHECK(parse_gradcheck_scope("ops") == GradcheckScope::ops);
  CHECK(parse_gradcheck_scope("all") == GradcheckScope::all);
  CHECK_THROWS_AS(parse_gradcheck_scope("everything"), std::invalid_argument);

  const auto ops = run_gradcheck_suite(GradcheckScope::ops, 1);
  const auto sdi = run_gradcheck_suite(GradcheckScope::sdi, 1);
  std::map<std::string, int> seen;
  for (const auto& r : ops) ++seen[r.name];
  for (const auto& r : sdi) ++seen[r.name];
  for (const auto& [name, count] : seen) CHECK_MESSAGE(count == 1, name);

  const std::vector<std::string> expected{
      "add", "sub", "hadamard", "divide", "scale", "add_scalar", "matmul", "relu", "sigmoid", "bce_with_logits",
      "reduce_sum", "reduce_mean", "reduce_max", "sum_all", "mean_all", "concat", "slice", "split", "reshape",
      "expand", "conv2d", "max_pool2d", "adaptive_avg_pool2d", "bilinear_resize", "group_norm", "channel_attention",
      "spatial_attention", "dice_bce_loss", "attend_and_project", "resize_to_level", "smooth", "fuse", "sdi_forward"};
  for (const auto& name : expected) CHECK_MESSAGE(seen.count(name) == 1, name);
}

TEST_CASE("operator and sdi scopes pass over 10 seeds") {
  for (auto scope : {GradcheckScope::ops, GradcheckScope::sdi}) {
    for (const auto& r : run_gradcheck_suite(scope)) {
      INFO(r.name << " max rel err " << r.max_rel_error);
      CHECK(r.passed());
      CHECK(r.coords > 0);
    }
  }
}
