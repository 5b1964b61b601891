#include "stec/gradcheck.hpp"

#include "stec/rng.hpp"

#include <algorithm>
#include <cmath>

namespace stec::verify {

namespace {

double rel_err(double a, double fd) {
  const double denom = std::max({std::abs(a), std::abs(fd), 1e-4});
  return std::abs(a - fd) / denom;
}

std::vector<long> probe_elems(long numel, long max_probes, Rng& rng) {
  if (max_probes < 0 || numel <= max_probes) {
    std::vector<long> all(static_cast<std::size_t>(numel));
    for (long i = 0; i < numel; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  std::vector<long> picks(static_cast<std::size_t>(max_probes));
  for (long i = 0; i < max_probes; ++i)
    picks[static_cast<std::size_t>(i)] =
        static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(numel)));
  return picks;
}

}  // namespace

FdReport finite_diff_check(const BuildFn& build,
                           const std::vector<grad::Tensor>& inputs, double h,
                           long max_probes_per_input, std::uint64_t seed) {
  auto run = [&](const std::vector<grad::Tensor>& xs, bool want_grads,
                 std::vector<grad::Tensor>* grads) {
    grad::Graph g;
    std::vector<grad::NodeId> leaves;
    leaves.reserve(xs.size());
    for (auto x : xs) {
      x.requires_grad = true;
      leaves.push_back(g.leaf(std::move(x)));
    }
    const grad::NodeId loss = build(g, leaves);
    if (want_grads) {
      g.backward(loss);
      grads->clear();
      for (const auto id : leaves) grads->push_back(g.grad(id));
    }
    return g.value(loss).scalar_value();
  };

  std::vector<grad::Tensor> analytic;
  run(inputs, true, &analytic);

  Rng rng(seed);
  FdReport rep;
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    const auto elems =
        probe_elems(inputs[idx].numel(), max_probes_per_input, rng);
    for (long e : elems) {
      std::vector<grad::Tensor> xs = inputs;
      xs[idx].data[e] += h;
      const double fp = run(xs, false, nullptr);
      xs[idx].data[e] -= 2.0 * h;
      const double fm = run(xs, false, nullptr);
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[idx].data[e];
      const double err = rel_err(a, fd);
      ++rep.probes;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_analytic = a;
        rep.worst_numeric = fd;
        rep.worst_input = static_cast<int>(idx);
        rep.worst_elem = e;
      }
    }
  }
  return rep;
}

FdReport finite_diff_check_params(const ParamEvalFn& eval,
                                  const model::ParamStore& base,
                                  const std::vector<std::string>& names,
                                  double h, long probes_per_tensor,
                                  std::uint64_t seed) {
  std::unordered_map<std::string, grad::Tensor> grads;
  {
    model::ParamStore store = base;
    eval(store, &grads);
  }

  Rng rng(seed);
  FdReport rep;
  int input_idx = 0;
  for (const auto& name : names) {
    const auto it = grads.find(name);
    if (it == grads.end()) {
      ++input_idx;
      continue;
    }
    const auto elems =
        probe_elems(base.tensor(name).numel(), probes_per_tensor, rng);
    for (long e : elems) {
      model::ParamStore plus = base;
      plus.tensor(name).data[e] += h;
      const double fp = eval(plus, nullptr);
      model::ParamStore minus = base;
      minus.tensor(name).data[e] -= h;
      const double fm = eval(minus, nullptr);
      const double fd = (fp - fm) / (2.0 * h);
      const double a = it->second.data[e];
      const double err = rel_err(a, fd);
      ++rep.probes;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_analytic = a;
        rep.worst_numeric = fd;
        rep.worst_input = input_idx;
        rep.worst_elem = e;
      }
    }
    ++input_idx;
  }
  return rep;
}

}  // namespace stec::verify
