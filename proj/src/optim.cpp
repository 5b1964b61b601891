#include "stec/optim.hpp"

#include <cmath>

namespace stec::opt {

double lr_at(long step, const OptimCfg& cfg) {
  cfg.validate();
  const long warm = cfg.warmup_steps();
  const long total = cfg.total_steps();
  if (step < 0 || step > total)
    throw std::out_of_range("lr_at: step outside schedule");
  const double peak = cfg.peak_lr();
  if (warm > 0 && step < warm)
    return peak * static_cast<double>(step) / static_cast<double>(warm);
  if (total == warm) return peak;
  const double t = static_cast<double>(step - warm) /
                   static_cast<double>(total - warm);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

void lars_sgd_step(model::ParamStore& store,
                   const std::unordered_map<std::string, grad::Tensor>& grads,
                   double lr, const OptimCfg& cfg) {
  // validate every gradient before mutating anything
  for (const auto& name : store.learnable_names()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (!it->second.data.isFinite().all())
      throw NanGradient("non-finite gradient in parameter '" + name + "'");
    if (it->second.numel() != store.tensor(name).numel())
      throw std::invalid_argument("lars_sgd_step: gradient shape mismatch for " +
                                  name);
  }

  for (const auto& name : store.learnable_names()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    grad::Tensor& w = store.tensor(name);
    const auto& flags = store.flags(name);
    const grad::Arr& gr = it->second.data;
    const double wd = flags.no_weight_decay ? 0.0 : cfg.weight_decay;

    double local_lr = 1.0;
    if (cfg.lars_enabled && !flags.exclude_from_lars) {
      const double w_norm = std::sqrt(w.data.square().sum());
      const double g_norm = std::sqrt(gr.square().sum());
      local_lr = cfg.lars_trust_coeff * w_norm /
                 (g_norm + wd * w_norm + cfg.lars_eps);
    }

    grad::Tensor& buf = store.momentum(name);
    buf.data = cfg.momentum * buf.data + (local_lr * lr) * (gr + wd * w.data);
    w.data -= buf.data;
  }
}

}  // namespace stec::opt
