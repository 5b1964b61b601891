#include "stec/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace stec::loss {

using grad::Arr;
using grad::Graph;
using grad::NodeId;

namespace {

constexpr double kMaskedLogit = -1e30;

}  // namespace

LossBreakdown make_breakdown(double id_loss, double manip_loss, double reg_loss,
                             double lambda_manip, double lambda_reg,
                             double id_accuracy, double manip_accuracy,
                             bool manip_empty) {
  LossBreakdown b;
  b.id_loss = id_loss;
  b.manip_loss = manip_loss;
  b.reg_loss = reg_loss;
  b.id_accuracy = id_accuracy;
  b.manip_accuracy = manip_accuracy;
  b.manip_empty = manip_empty;
  b.total = id_loss + lambda_manip * manip_loss + lambda_reg * reg_loss;
  return b;
}

IdLoss ntxent_id_loss(Graph& g, NodeId z, const std::vector<int>& pair_index,
                      double tau) {
  if (tau <= 0.0) throw std::invalid_argument("ntxent: tau must be positive");
  const grad::Tensor& zt = g.value(z);
  const Eigen::Index N = zt.dim(0);
  if (static_cast<Eigen::Index>(pair_index.size()) != N)
    throw std::invalid_argument("ntxent: pair index size mismatch");
  for (Eigen::Index i = 0; i < N; ++i) {
    const int p = pair_index[static_cast<std::size_t>(i)];
    if (p < 0 || p >= N || p == i)
      throw std::invalid_argument("ntxent: anchor without a valid positive");
  }

  NodeId zn = grad::l2_normalize_rows(g, z);
  NodeId sims = grad::scale(g, grad::matmul_nt(g, zn, zn), 1.0 / tau);
  NodeId masked = grad::mask_diagonal(g, sims, kMaskedLogit);

  IdLoss out;
  out.node = grad::softmax_xent_rows(g, masked, pair_index,
                                     Arr::Ones(static_cast<Eigen::Index>(N)));

  // accuracy: positive ranks first among candidates
  const grad::Tensor& sv = g.value(masked);
  int correct = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index best = 0;
    sv.mat().row(i).maxCoeff(&best);
    if (best == pair_index[static_cast<std::size_t>(i)]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(N);
  return out;
}

double ntxent_anchor_term(const Eigen::VectorXd& sims, int positive, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("ntxent: tau must be positive");
  if (positive < 0 || positive >= sims.size())
    throw std::invalid_argument("ntxent: positive index out of range");
  const Eigen::VectorXd scaled = sims / tau;
  const double mx = scaled.maxCoeff();
  const double lse = mx + std::log((scaled.array() - mx).exp().sum());
  return lse - scaled[positive];
}

ManipLoss manip_ce_loss(Graph& g, NodeId logits,
                        const std::vector<std::array<int, 6>>& bins,
                        const std::vector<bool>& mask, int K) {
  const grad::Tensor& lv = g.value(logits);
  const Eigen::Index P = lv.dim(0);
  if (lv.dim(1) != 6 * K)
    throw std::invalid_argument("manip_ce_loss: logits must be [P, 6K]");
  if (static_cast<Eigen::Index>(bins.size()) != P ||
      static_cast<Eigen::Index>(mask.size()) != P)
    throw std::invalid_argument("manip_ce_loss: label/mask count mismatch");

  // [P, 6K] -> [6P, K]: component rows grouped per pair
  NodeId rows = grad::reshape(g, logits, {6 * P, K});
  std::vector<int> labels(static_cast<std::size_t>(6 * P));
  Arr weights(6 * P);
  for (Eigen::Index p = 0; p < P; ++p)
    for (int k = 0; k < 6; ++k) {
      labels[static_cast<std::size_t>(6 * p + k)] =
          bins[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
      weights[6 * p + k] = mask[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
    }

  ManipLoss out;
  out.node = grad::softmax_xent_rows(g, rows, labels, weights);
  out.empty = weights.sum() == 0.0;

  const grad::Tensor& rv = g.value(rows);
  long correct = 0, counted = 0;
  for (Eigen::Index r = 0; r < 6 * P; ++r) {
    if (weights[r] == 0.0) continue;
    Eigen::Index best = 0;
    rv.mat().row(r).maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(r)]) ++correct;
    ++counted;
  }
  out.accuracy =
      counted > 0 ? static_cast<double>(correct) / static_cast<double>(counted)
                  : 0.0;
  return out;
}

ManipLoss manip_l2_loss(Graph& g, NodeId outputs,
                        const std::vector<act::ActionVec>& targets,
                        const std::vector<bool>& mask) {
  const grad::Tensor& ov = g.value(outputs);
  const Eigen::Index P = ov.dim(0);
  if (ov.dim(1) != 6)
    throw std::invalid_argument("manip_l2_loss: outputs must be [P, 6]");
  if (static_cast<Eigen::Index>(targets.size()) != P ||
      static_cast<Eigen::Index>(mask.size()) != P)
    throw std::invalid_argument("manip_l2_loss: target/mask count mismatch");

  grad::Tensor tgt = grad::Tensor::zeros({P, 6});
  Arr weights(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    for (int k = 0; k < 6; ++k)
      tgt.mat()(p, k) = targets[static_cast<std::size_t>(p)][k];
    weights[p] = mask[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
  }
  NodeId diff = grad::sub(g, outputs, g.leaf(std::move(tgt)));
  NodeId per_pair = grad::rowsum(g, grad::mul(g, diff, diff));

  ManipLoss out;
  out.node = grad::weighted_mean(g, per_pair, weights);
  out.empty = weights.sum() == 0.0;
  out.accuracy = 0.0;  // no categorical notion for the regression ablation
  return out;
}

NodeId byol_id_loss(Graph& g, NodeId online_proj, NodeId target_proj,
                    const std::vector<int>& pair_index, double eps) {
  const grad::Tensor& zo = g.value(online_proj);
  const grad::Tensor& zt = g.value(target_proj);
  if (!grad::same_shape(zo, zt))
    throw std::invalid_argument("byol_id_loss: projection shapes differ");
  const Eigen::Index N = zo.dim(0);
  if (static_cast<Eigen::Index>(pair_index.size()) != N)
    throw std::invalid_argument("byol_id_loss: pair index size mismatch");

  NodeId a = grad::l2_normalize_rows(g, online_proj);
  NodeId b = grad::l2_normalize_rows(g, grad::stopgrad(g, target_proj));
  NodeId b_pos = grad::permute_rows(g, b, pair_index);
  NodeId diff = grad::sub(g, a, b_pos);
  NodeId sq = grad::mul(g, diff, diff);
  return grad::scale(g, grad::sum(g, sq), (1.0 - eps) / static_cast<double>(N));
}

RelicLoss relic_id_loss(Graph& g, NodeId z_a, NodeId z_b, NodeId zt_a,
                        NodeId zt_b, double tau, double alpha) {
  if (alpha < 0.0)
    throw std::invalid_argument("relic_id_loss: alpha must be nonnegative");
  if (tau <= 0.0)
    throw std::invalid_argument("relic_id_loss: tau must be positive");
  const Eigen::Index B = g.value(z_a).dim(0);
  if (g.value(z_b).dim(0) != B || g.value(zt_a).dim(0) != B ||
      g.value(zt_b).dim(0) != B)
    throw std::invalid_argument("relic_id_loss: view blocks differ in size");

  NodeId a = grad::l2_normalize_rows(g, z_a);
  NodeId b = grad::l2_normalize_rows(g, z_b);
  NodeId ta = grad::l2_normalize_rows(g, grad::stopgrad(g, zt_a));
  NodeId tb = grad::l2_normalize_rows(g, grad::stopgrad(g, zt_b));

  // anchor view-A rows against target view-B candidates and vice versa;
  // the positive for identity i sits on the diagonal
  NodeId sims_ab = grad::scale(g, grad::matmul_nt(g, a, tb), 1.0 / tau);
  NodeId sims_ba = grad::scale(g, grad::matmul_nt(g, b, ta), 1.0 / tau);

  std::vector<int> diag(static_cast<std::size_t>(B));
  for (Eigen::Index i = 0; i < B; ++i) diag[static_cast<std::size_t>(i)] = static_cast<int>(i);
  const Arr ones = Arr::Ones(B);
  NodeId nt_ab = grad::softmax_xent_rows(g, sims_ab, diag, ones);
  NodeId nt_ba = grad::softmax_xent_rows(g, sims_ba, diag, ones);
  NodeId nt = grad::scale(g, grad::add(g, nt_ab, nt_ba), 0.5);

  // confidence penalty: KL(q_c1 ; q_c2) per anchor over the B identities
  NodeId q1 = grad::softmax_rows(g, sims_ab);
  NodeId l1 = grad::log_softmax_rows(g, sims_ab);
  NodeId l2 = grad::log_softmax_rows(g, sims_ba);
  NodeId kl_rows = grad::rowsum(g, grad::mul(g, q1, grad::sub(g, l1, l2)));
  NodeId kl = grad::mean(g, kl_rows);

  RelicLoss out;
  out.node = grad::add(g, nt, grad::scale(g, kl, alpha));
  out.nt_value = g.value(nt).scalar_value();
  out.kl_value = g.value(kl).scalar_value();

  int correct = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const grad::Tensor& sv = g.value(pass == 0 ? sims_ab : sims_ba);
    for (Eigen::Index i = 0; i < B; ++i) {
      Eigen::Index best = 0;
      sv.mat().row(i).maxCoeff(&best);
      if (best == i) ++correct;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(2 * B);
  return out;
}

}  // namespace stec::loss
