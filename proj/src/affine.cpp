#include "stec/affine.hpp"

#include <cmath>
#include <stdexcept>

namespace stec::act {

void BinningSpec::validate() const {
  if (K < 2) throw std::invalid_argument("BinningSpec: K must be >= 2");
  for (int k = 0; k < 6; ++k)
    if (!(manip_min[k] < manip_max[k]))
      throw std::invalid_argument(
          "BinningSpec: manip_min must be componentwise below manip_max");
}

AffineMat crop_matrix(const img::TransformRecord& rec, int W, int H) {
  if (rec.crop_width <= 0 || rec.crop_height <= 0)
    throw std::invalid_argument("crop_matrix: zero-area crop");
  const double w = rec.crop_width, h = rec.crop_height;
  const double l = rec.crop_left, t = rec.crop_top;
  const double f = rec.mirror < 0 ? -1.0 : 1.0;
  AffineMat m = AffineMat::Identity();
  m(0, 0) = f * w / W;
  m(0, 2) = w / W - 1.0 + 2.0 * l / W;
  m(1, 1) = h / H;
  m(1, 2) = 1.0 - h / H + 2.0 * t / H;
  return m;
}

ActionVec ego_action(const AffineMat& mx, const AffineMat& mx_prime) {
  const double det = mx.determinant();
  if (std::abs(det) < 1e-12)
    throw std::invalid_argument("ego_action: singular view matrix");
  AffineMat rel = mx_prime * mx.inverse();
  rel.row(2) << 0.0, 0.0, 1.0;
  ActionVec a;
  a << rel(0, 0), rel(0, 1), rel(0, 2), rel(1, 0), rel(1, 1), rel(1, 2);
  return a;
}

std::array<int, 6> bin_action(const ActionVec& a, const BinningSpec& spec) {
  spec.validate();
  std::array<int, 6> bins;
  for (int k = 0; k < 6; ++k) {
    const double t =
        (a[k] - spec.manip_min[k]) / (spec.manip_max[k] - spec.manip_min[k]);
    const double f = std::floor(static_cast<double>(spec.K) * t);
    int label = f >= static_cast<double>(spec.K) ? spec.K - 1
                : f < 0.0                        ? 0
                                                 : static_cast<int>(f);
    bins[static_cast<std::size_t>(k)] = label;
  }
  return bins;
}

ActionVec allocentric_action(const img::TransformRecord& rec_x,
                             const img::TransformRecord& rec_xp, int W, int H) {
  auto params = [W, H](const img::TransformRecord& r) {
    ActionVec p;
    p << static_cast<double>(r.crop_width) / W,
        static_cast<double>(r.crop_height) / H,
        static_cast<double>(r.crop_left) / W,
        static_cast<double>(r.crop_top) / H, r.mirror < 0 ? 1.0 : 0.0, 0.0;
    return p;
  };
  return params(rec_x) - params(rec_xp);
}

EgoAction make_ego_action(const img::TransformRecord& rec_x,
                          const img::TransformRecord& rec_xp, int W, int H,
                          const BinningSpec& spec) {
  EgoAction out;
  out.a_manip = ego_action(crop_matrix(rec_x, W, H), crop_matrix(rec_xp, W, H));
  out.bins = bin_action(out.a_manip, spec);
  out.valid = !(rec_x.solarized || rec_xp.solarized);
  return out;
}

}  // namespace stec::act
