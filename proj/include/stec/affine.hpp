#pragma once

#include "stec/image.hpp"

#include <Eigen/Dense>

#include <array>

namespace stec::act {

// 2-D homogeneous transform; bottom row is kept exactly (0,0,1)
using AffineMat = Eigen::Matrix3d;
using ActionVec = Eigen::Matrix<double, 6, 1>;  // (m11,m12,m13,m21,m22,m23)

struct BinningSpec {
  int K = 6;
  ActionVec manip_min;
  ActionVec manip_max;

  static BinningSpec defaults() {
    BinningSpec s;
    s.K = 6;
    s.manip_min << -2.0, -2.0, -0.5, -2.0, -2.0, -0.5;
    s.manip_max << 2.0, 2.0, 0.5, 2.0, 2.0, 0.5;
    return s;
  }
  void validate() const;
};

struct EgoAction {
  ActionVec a_manip = ActionVec::Zero();
  std::array<int, 6> bins = {0, 0, 0, 0, 0, 0};
  bool valid = true;
};

// Matrix mapping view-canvas coordinates to source positions on the
// original canvas, both in [-1,1] conventions.
AffineMat crop_matrix(const img::TransformRecord& rec, int W, int H);

// relative action x -> x': top two rows of M_{x'} * M_x^{-1}
ActionVec ego_action(const AffineMat& mx, const AffineMat& mx_prime);

std::array<int, 6> bin_action(const ActionVec& a, const BinningSpec& spec);

// ablation variant: componentwise differences of crop parameters
// (w/W, h/H, l/W, t/H, mirrored?1:0, 0), first view minus second
ActionVec allocentric_action(const img::TransformRecord& rec_x,
                             const img::TransformRecord& rec_xp, int W, int H);

// full copy for a view pair; invalid when either view was solarized
EgoAction make_ego_action(const img::TransformRecord& rec_x,
                          const img::TransformRecord& rec_xp, int W, int H,
                          const BinningSpec& spec);

inline Eigen::Vector2d apply_affine(const AffineMat& m, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return {q.x(), q.y()};
}

inline AffineMat compose_top_rows(const ActionVec& a) {
  AffineMat m = AffineMat::Identity();
  m(0, 0) = a[0];
  m(0, 1) = a[1];
  m(0, 2) = a[2];
  m(1, 0) = a[3];
  m(1, 1) = a[4];
  m(1, 2) = a[5];
  return m;
}

}  // namespace stec::act
