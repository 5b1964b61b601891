#pragma once

#include "stec/graph.hpp"
#include "stec/params.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stec::verify {

struct FdReport {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int worst_input = -1;
  long worst_elem = -1;
  long probes = 0;

  bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Central finite differences against reverse-mode gradients.
// build() receives fresh leaves for the (possibly perturbed) inputs and
// returns the scalar loss node; it must be free of external state.
using BuildFn =
    std::function<grad::NodeId(grad::Graph&, const std::vector<grad::NodeId>&)>;

FdReport finite_diff_check(const BuildFn& build,
                           const std::vector<grad::Tensor>& inputs,
                           double h = 1e-6, long max_probes_per_input = -1,
                           std::uint64_t seed = 17);

// Parameter-level variant: eval() gets its own copy of the store (so any
// running-stat updates stay local) and reports gradients when asked.
using ParamEvalFn = std::function<double(
    model::ParamStore&, std::unordered_map<std::string, grad::Tensor>*)>;

FdReport finite_diff_check_params(const ParamEvalFn& eval,
                                  const model::ParamStore& base,
                                  const std::vector<std::string>& names,
                                  double h = 1e-6, long probes_per_tensor = 24,
                                  std::uint64_t seed = 17);

}  // namespace stec::verify
