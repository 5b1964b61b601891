#pragma once

#include "stec/ops.hpp"
#include "stec/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stec::model {

enum class Mode { train, eval };

struct EncoderCfg {
  std::string kind = "smallconv";  // "smallconv" | "mlp"
  std::vector<int> widths = {};    // conv channels or mlp hidden sizes
  int feature_dim = 64;
  int resolution = 32;

  std::vector<int> effective_widths() const {
    if (!widths.empty()) return widths;
    return kind == "mlp" ? std::vector<int>{256, 128}
                         : std::vector<int>{16, 32, 64};
  }
};

struct HeadCfg {
  int g_hidden = 512;
  int g_out = 64;
  int psi_hidden = 512;
  int action_dims = 6;
  int K = 6;
  bool byol_predictor = false;
};

// Parameter creation; weights are seeded per name so that adding or
// removing an unrelated module never shifts another module's init.
void init_encoder(ParamStore& ps, const EncoderCfg& cfg, std::uint64_t seed,
                  const std::string& prefix = "f.");
void init_projector(ParamStore& ps, int in_dim, const HeadCfg& cfg,
                    std::uint64_t seed, const std::string& prefix = "g.");
void init_predictor(ParamStore& ps, const HeadCfg& cfg, std::uint64_t seed,
                    const std::string& prefix = "q.");
// out_dim = 6*K for the classification head, 6 for the L2-regression head
void init_manip_head(ParamStore& ps, int in_dim, int out_dim, const HeadCfg& cfg,
                     std::uint64_t seed, const std::string& prefix = "psi.");
void init_probe(ParamStore& ps, int in_dim, int classes, std::uint64_t seed,
                const std::string& prefix = "probe.");

// images [B,3,H,W] -> features [B,D]
grad::NodeId encode(grad::Graph& g, ParamStore& ps, grad::NodeId images,
                    const EncoderCfg& cfg, Mode mode,
                    const std::string& prefix = "f.", bool use_shadow = false);

// g MLP: hidden BN+ReLU, output BN (omitted on target copies)
grad::NodeId project(grad::Graph& g, ParamStore& ps, grad::NodeId h,
                     const HeadCfg& cfg, Mode mode,
                     const std::string& prefix = "g.", bool use_shadow = false,
                     bool target_copy = false);

// optional BYOL predictor on top of the online projection
grad::NodeId predict(grad::Graph& g, ParamStore& ps, grad::NodeId z,
                     const HeadCfg& cfg, Mode mode,
                     const std::string& prefix = "q.");

// psi on [h;h']: logits [P, out_dim]
grad::NodeId manip_logits(grad::Graph& g, ParamStore& ps, grad::NodeId h,
                          grad::NodeId hp, const HeadCfg& cfg, Mode mode,
                          const std::string& prefix = "psi.");

grad::NodeId probe_logits(grad::Graph& g, ParamStore& ps, grad::NodeId h,
                          const std::string& prefix = "probe.");

// cosine similarity of projections, one scalar per row pair: [B]
grad::NodeId phi_pairs(grad::Graph& g, ParamStore& ps, grad::NodeId h,
                       grad::NodeId hp, const HeadCfg& cfg, Mode mode,
                       const std::string& prefix = "g.");

}  // namespace stec::model
