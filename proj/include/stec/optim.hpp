#pragma once

#include "stec/params.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>

namespace stec::opt {

struct NanGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimCfg {
  double base_lr = 1.0;  // per 256 batch
  int batch_size = 64;
  double momentum = 0.9;
  int warmup_epochs = 10;
  int total_epochs = 20;
  long steps_per_epoch = 1;
  double weight_decay = 1e-6;
  bool lars_enabled = true;
  double lars_trust_coeff = 0.001;
  double lars_eps = 1e-9;

  double peak_lr() const { return base_lr * batch_size / 256.0; }
  long warmup_steps() const { return warmup_epochs * steps_per_epoch; }
  long total_steps() const { return total_epochs * steps_per_epoch; }
  void validate() const {
    if (base_lr <= 0.0) throw std::invalid_argument("OptimCfg: base_lr > 0");
    if (warmup_epochs > total_epochs)
      throw std::invalid_argument("OptimCfg: warmup_epochs <= total_epochs");
    if (steps_per_epoch < 1)
      throw std::invalid_argument("OptimCfg: steps_per_epoch >= 1");
  }
};

// linear ramp to peak over the warmup steps, then cosine decay to exactly 0
double lr_at(long step, const OptimCfg& cfg);

// One SGD+momentum step with the layer-wise trust ratio applied to every
// tensor not flagged exclude_from_lars:
//   local_lr = trust * ||w|| / (||grad|| + wd*||w|| + eps)
//   buf      = momentum*buf + local_lr*lr*(grad + wd*w);  w -= buf
// Excluded tensors take the same update with local_lr = 1. Weight decay is
// skipped for no_weight_decay tensors. Non-finite gradients abort the whole
// step before any parameter moves.
void lars_sgd_step(model::ParamStore& store,
                   const std::unordered_map<std::string, grad::Tensor>& grads,
                   double lr, const OptimCfg& cfg);

}  // namespace stec::opt
