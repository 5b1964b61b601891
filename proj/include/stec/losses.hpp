#pragma once

#include "stec/affine.hpp"
#include "stec/ops.hpp"

#include <array>
#include <vector>

namespace stec::loss {

// Eq.-style scalar record: total = id + lambda_manip*manip + lambda_reg*reg
struct LossBreakdown {
  double total = 0.0;
  double id_loss = 0.0;
  double manip_loss = 0.0;
  double reg_loss = 0.0;
  double id_accuracy = 0.0;
  double manip_accuracy = 0.0;
  bool manip_empty = false;
};

LossBreakdown make_breakdown(double id_loss, double manip_loss, double reg_loss,
                             double lambda_manip, double lambda_reg,
                             double id_accuracy, double manip_accuracy,
                             bool manip_empty);

struct IdLoss {
  grad::NodeId node = -1;
  double accuracy = 0.0;
};

struct ManipLoss {
  grad::NodeId node = -1;
  double accuracy = 0.0;
  bool empty = false;
};

// Softmax instance discrimination over 2B embeddings; every view anchors
// once against the other 2B-1, its positive given by pair_index.
IdLoss ntxent_id_loss(grad::Graph& g, grad::NodeId z,
                      const std::vector<int>& pair_index, double tau);

// single-anchor closed form: -log softmax(sims/tau)[positive]
double ntxent_anchor_term(const Eigen::VectorXd& sims, int positive, double tau);

// mean CE over unmasked pairs and the 6 action components;
// logits [P, 6K], bins[p][k] in {0..K-1}
ManipLoss manip_ce_loss(grad::Graph& g, grad::NodeId logits,
                        const std::vector<std::array<int, 6>>& bins,
                        const std::vector<bool>& mask, int K);

// regression ablation: mean squared error over unmasked pairs, outputs [P,6]
ManipLoss manip_l2_loss(grad::Graph& g, grad::NodeId outputs,
                        const std::vector<act::ActionVec>& targets,
                        const std::vector<bool>& mask);

// (1-eps) * mean over anchors of || zhat - stopgrad(zthat_pos) ||^2 with
// row-normalized projections; gradient reaches the online branch only
grad::NodeId byol_id_loss(grad::Graph& g, grad::NodeId online_proj,
                          grad::NodeId target_proj,
                          const std::vector<int>& pair_index,
                          double eps = 1e-6);

struct RelicLoss {
  grad::NodeId node = -1;
  double nt_value = 0.0;
  double kl_value = 0.0;
  double accuracy = 0.0;
};

// Cross-view instance discrimination against target-network embeddings,
// plus alpha * KL between the anchor's candidate distributions from the
// two views. Blocks a/b hold the online projections of the two view sets,
// ta/tb the target projections; identity i pairs row i across blocks.
RelicLoss relic_id_loss(grad::Graph& g, grad::NodeId z_a, grad::NodeId z_b,
                        grad::NodeId zt_a, grad::NodeId zt_b, double tau,
                        double alpha);

}  // namespace stec::loss
