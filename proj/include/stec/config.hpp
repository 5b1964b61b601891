#pragma once

#include "stec/affine.hpp"
#include "stec/augment.hpp"
#include "stec/nets.hpp"
#include "stec/optim.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stec::run {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method { simclr, stec, byol, byol_stec, relic, stec_star };
enum class ActionFrame { egocentric, allocentric };
enum class ManipLossKind { classification, l2 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct ExperimentCfg {
  Method method = Method::stec;
  std::uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir = "runs/out";
  int epochs = 20;
  int batch_size = 64;
  int resolution = 32;

  model::EncoderCfg encoder;
  model::HeadCfg heads;

  act::BinningSpec binning = act::BinningSpec::defaults();
  ActionFrame action_frame = ActionFrame::egocentric;
  ManipLossKind manip_kind = ManipLossKind::classification;

  double lambda_manip = 1.0;
  double tau = 0.5;
  double alpha = 1.0;
  double ema_tau0 = 0.99;
  double byol_eps = 1e-6;

  img::AugmentPolicy policy;
  opt::OptimCfg optim;

  int log_every = 10;
  int checkpoint_every = 1;

  int probe_epochs = 40;
  double probe_lr = 0.01;
  double probe_weight_decay = 5e-4;
  double probe_train_frac = 0.8;
  int probe_batch = 64;

  bool uses_target_network() const {
    return method == Method::byol || method == Method::byol_stec ||
           method == Method::relic || method == Method::stec_star;
  }
  // the manipulation branch exists only where it can contribute; with
  // lambda_manip = 0 the graph reduces exactly to the baseline method
  bool uses_manip() const {
    return (method == Method::stec || method == Method::byol_stec ||
            method == Method::stec_star) &&
           lambda_manip > 0.0;
  }

  void validate() const;
  std::uint64_t config_hash() const;
};

// flat `key = value` text; '#' comments; unknown keys rejected
ExperimentCfg parse_config_text(const std::string& text);
ExperimentCfg parse_config_file(const std::string& path);

// effective configuration as sorted key=value lines (hash input; also
// written next to run outputs for reproducibility)
std::string canonical_config(const ExperimentCfg& cfg);

}  // namespace stec::run
