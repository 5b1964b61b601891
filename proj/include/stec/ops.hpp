#pragma once

#include "stec/graph.hpp"

#include <vector>

namespace stec::grad {

// ---- structural ----
NodeId stopgrad(Graph& g, NodeId x);
NodeId reshape(Graph& g, NodeId x, Shape shape);
NodeId concat_cols(Graph& g, NodeId a, NodeId b);
// row gather: out.row(i) = x.row(perm[i]); perm may select any subset
NodeId permute_rows(Graph& g, NodeId x, const std::vector<int>& perm);
// [B,C,H,W] <-> [B*H*W, C]; used to run 2-D batch norm over conv maps
NodeId rows_from_nchw(Graph& g, NodeId x);
NodeId nchw_from_rows(Graph& g, NodeId x, Eigen::Index B, Eigen::Index C,
                      Eigen::Index H, Eigen::Index W);
NodeId mask_diagonal(Graph& g, NodeId x, Real value);

// ---- pointwise ----
NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId scale(Graph& g, NodeId a, Real c);
NodeId add_const(Graph& g, NodeId a, Real c);
NodeId relu(Graph& g, NodeId a);
NodeId exp(Graph& g, NodeId a);
NodeId log(Graph& g, NodeId a);

// ---- linear ----
NodeId matmul(Graph& g, NodeId a, NodeId b);     // [BxI]*[IxO]
NodeId matmul_nt(Graph& g, NodeId a, NodeId b);  // A*B^T: [BxD]*[MxD] -> [BxM]
NodeId add_bias(Graph& g, NodeId a, NodeId bias);
NodeId l2_normalize_rows(Graph& g, NodeId a, Real eps = 1e-12);

// ---- reductions ----
NodeId sum(Graph& g, NodeId a);
NodeId mean(Graph& g, NodeId a);
NodeId rowsum(Graph& g, NodeId a);  // [NxD] -> [N]
// (sum_i w_i v_i) / (sum_i w_i); exactly 0 when all weights vanish
NodeId weighted_mean(Graph& g, NodeId v, const Arr& w);

// ---- softmax family ----
NodeId softmax_rows(Graph& g, NodeId a);
NodeId log_softmax_rows(Graph& g, NodeId a);
// weighted-mean softmax cross-entropy over rows; labels in [0, cols)
NodeId softmax_xent_rows(Graph& g, NodeId logits, const std::vector<int>& labels,
                         const Arr& row_weights);

// ---- neural ----
struct BatchNormState {
  Tensor* running_mean = nullptr;  // [D]
  Tensor* running_var = nullptr;   // [D]
};

// x [BxD]; train mode normalizes by batch statistics (B >= 2) and, when
// update_running is set, folds them into the running stats; eval mode
// normalizes by the running stats. Target-network forwards pass
// update_running=false so their stats stay pure EMA copies.
NodeId batch_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta,
                  BatchNormState state, bool train, bool update_running = true,
                  Real eps = 1e-5, Real momentum = 0.1);

// x [B,C,H,W], w [F,C,kh,kw], b [F]
NodeId conv2d(Graph& g, NodeId x, NodeId w, NodeId b, int stride, int pad);
NodeId global_avg_pool(Graph& g, NodeId x);  // [B,C,H,W] -> [B,C]

}  // namespace stec::grad
