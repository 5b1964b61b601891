#include "stec/action_tree.hpp"

#include "stec/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace stec::loss {

void ActionTreeDist::validate(double tol) const {
  if (p_id0 < -tol || p_id0 > 1.0 + tol)
    throw std::invalid_argument("ActionTreeDist: p_id0 outside [0,1]");
  if (cond.size() < 1)
    throw std::invalid_argument("ActionTreeDist: empty manipulation branch");
  if ((cond < -tol).any())
    throw std::invalid_argument("ActionTreeDist: negative branch probability");
  if (std::abs(cond.sum() - 1.0) > tol)
    throw std::invalid_argument("ActionTreeDist: conditional branch not normalized");
}

namespace {

double kl_term(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0)
    throw std::domain_error("kl_decompose: infinite KL (q=0 where p>0)");
  return p * std::log(p / q);
}

}  // namespace

KlParts kl_decompose(const ActionTreeDist& p, const ActionTreeDist& q) {
  p.validate();
  q.validate();
  if (p.cond.size() != q.cond.size())
    throw std::invalid_argument("kl_decompose: branch sizes differ");

  KlParts out;

  // joint: every (a_id=0, b) leaf plus the single a_id=1 leaf
  for (Eigen::Index b = 0; b < p.cond.size(); ++b)
    out.joint += kl_term(p.p_id0 * p.cond[b], q.p_id0 * q.cond[b]);
  out.joint += kl_term(p.p_id1(), q.p_id1());

  out.id_part = kl_term(p.p_id0, q.p_id0) + kl_term(p.p_id1(), q.p_id1());

  if (p.p_id0 > 0.0) {
    double cond_kl = 0.0;
    for (Eigen::Index b = 0; b < p.cond.size(); ++b)
      cond_kl += kl_term(p.cond[b], q.cond[b]);
    out.manip_part = p.p_id0 * cond_kl;
  }
  return out;
}

ActionTreeDist random_tree(int branches, std::uint64_t seed) {
  Rng rng(seed);
  ActionTreeDist t;
  const double u = rng.uniform();
  if (u < 0.05)
    t.p_id0 = 0.0;
  else if (u < 0.10)
    t.p_id0 = 1.0;
  else
    t.p_id0 = rng.uniform();
  t.cond = Eigen::ArrayXd(branches);
  double total = 0.0;
  for (int b = 0; b < branches; ++b) {
    t.cond[b] = 1e-4 + rng.uniform();  // keep q away from exact zero
    total += t.cond[b];
  }
  t.cond /= total;
  return t;
}

std::string BoundReport::describe() const {
  std::ostringstream os;
  if (ok()) {
    os << "checks=" << checks << " violations=0 max_gap=" << max_gap;
  } else {
    os << "violations=" << violations << "/" << checks << " worst anchor "
       << worst_anchor << ": L_id=" << worst_lhs << " > bound=" << worst_rhs;
  }
  return os.str();
}

BoundReport verify_upper_bound(const grad::MatRM& z,
                               const std::vector<int>& pair_index, double tau,
                               double slack) {
  const Eigen::Index N = z.rows();
  if (static_cast<Eigen::Index>(pair_index.size()) != N)
    throw std::invalid_argument("verify_upper_bound: pair index size mismatch");

  grad::MatRM zn = z;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double n = zn.row(i).norm();
    if (n > 0.0) zn.row(i) /= n;
  }
  const grad::MatRM sims = zn * zn.transpose() / tau;

  BoundReport rep;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int pos = pair_index[static_cast<std::size_t>(i)];
    // softmax over candidates j != i
    double mx = -1e300;
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != i) mx = std::max(mx, sims(i, j));
    double zsum = 0.0;
    for (Eigen::Index j = 0; j < N; ++j)
      if (j != i) zsum += std::exp(sims(i, j) - mx);
    auto q_of = [&](Eigen::Index j) {
      return std::exp(sims(i, j) - mx) / zsum;
    };
    const double q_pos = q_of(pos);
    const double bound = -std::log(q_pos);

    auto record = [&](double lhs, Eigen::Index anchor) {
      ++rep.checks;
      const double gap = lhs - bound;
      if (gap > rep.max_gap) rep.max_gap = gap;
      if (gap > slack) {
        ++rep.violations;
        if (lhs > rep.worst_lhs || rep.worst_anchor < 0) {
          rep.worst_anchor = static_cast<int>(anchor);
          rep.worst_lhs = lhs;
          rep.worst_rhs = bound;
        }
      }
    };

    // a_id = 0: the post-action input is the positive itself
    record(-std::log(q_pos), i);
    // a_id = 1: every negative candidate as the post-action input
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i || j == pos) continue;
      record(-std::log(1.0 - q_of(j)), i);
    }
  }
  return rep;
}

}  // namespace stec::loss
