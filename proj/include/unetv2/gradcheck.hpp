#ifndef UNETV2_GRADCHECK_HPP
#define UNETV2_GRADCHECK_HPP

#include "unetv2/autograd.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace unetv2 {

struct GradcheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-6;
  /// Coordinates probed per tensor, chosen at random; 0 probes all of them.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Times a mismatching probe may be repeated with eps/10 when its window
  /// straddles a non-differentiable point.
  std::size_t kink_retries = 2;
};

struct GradcheckResult {
  std::string name;
  /// max |analytic - central| / max(1, |central|)
  double max_rel_error = 0;
  std::size_t coords = 0;
  /// Probes that needed a smaller step because of a kink.
  std::size_t kinks = 0;
  double tolerance = 1e-6;

  bool passed() const { return max_rel_error < tolerance; }
};

using LossBuilder = std::function<Var<double>(Graph<double>&)>;

/// Compares the backward pass of `loss` against central differences in every
/// probed coordinate of `targets`. `loss` must rebuild the graph from the
/// current parameter values on every call.
GradcheckResult check_gradients(const std::string& name, std::span<Parameter<double>* const> targets,
                                const LossBuilder& loss, const GradcheckOptions& options = {});

enum class GradcheckScope { ops, sdi, model, all };

GradcheckScope parse_gradcheck_scope(const std::string& name);

/// One entry per differentiable operator of the scope; each entry is the worst
/// case over `seeds` random draws.
std::vector<GradcheckResult> run_gradcheck_suite(GradcheckScope scope, std::size_t seeds = 10);

}  // namespace unetv2

#endif  // UNETV2_GRADCHECK_HPP
