#pragma once

#include "stec/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stec::loss {

// Two-level action distribution: a binary identity branch and, under
// a_id=0, a categorical manipulation branch. The a_id=1 branch carries a
// single formal "unknown" manipulation with probability one.
struct ActionTreeDist {
  double p_id0 = 0.5;                 // p(a_id = 0)
  Eigen::ArrayXd cond;                // p(a_manip = b | a_id = 0)

  double p_id1() const { return 1.0 - p_id0; }
  void validate(double tol = 1e-12) const;
};

struct KlParts {
  double joint = 0.0;   // KL over the full tree, summed leaf by leaf
  double id_part = 0.0;
  double manip_part = 0.0;
};

// joint computed by direct enumeration of (a_id, a_manip) leaves; the two
// parts from their branch formulas. Infinite KL (q=0 where p>0) throws.
KlParts kl_decompose(const ActionTreeDist& p, const ActionTreeDist& q);

// random tree pair generator for property checks; occasionally degenerate
// (p_id0 in {0,1})
ActionTreeDist random_tree(int branches, std::uint64_t seed);

// App.-D.9 style check: with a perfect-copy EC over the batch candidate
// structure, the exact two-branch KL of the identity loss never exceeds
// -log q(a_id=0 | x, x'').
struct BoundReport {
  long checks = 0;
  long violations = 0;
  double max_gap = 0.0;  // max of (L_id - bound); <= slack when ok
  int worst_anchor = -1;
  double worst_lhs = 0.0;
  double worst_rhs = 0.0;
  bool ok() const { return violations == 0; }
  std::string describe() const;
};

BoundReport verify_upper_bound(const grad::MatRM& z,
                               const std::vector<int>& pair_index, double tau,
                               double slack = 1e-12);

}  // namespace stec::loss
