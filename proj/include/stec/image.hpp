#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>

namespace stec::img {

// H x W x 3 interleaved RGB, unit-interval doubles, row-major.
struct Image {
  int height = 0;
  int width = 0;
  Eigen::ArrayXd data;

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(Eigen::ArrayXd::Zero(3L * h * w)) {}

  double& at(int y, int x, int c) { return data[(static_cast<long>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return data[(static_cast<long>(y) * width + x) * 3 + c];
  }
  long numel() const { return data.size(); }
};

// Everything sampled while producing a view; the action copy must be able
// to reconstruct the full transformation from this record alone.
struct ColorParams {
  bool applied = false;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_shift = 0.0;
  std::array<int, 4> order = {0, 1, 2, 3};  // indices into {bright,contr,sat,hue}
};

struct TransformRecord {
  // crop rectangle in source-canvas pixels
  int crop_left = 0;
  int crop_top = 0;
  int crop_width = 0;
  int crop_height = 0;
  int mirror = 1;  // +1 or -1
  ColorParams color;
  bool grayscale = false;
  bool blurred = false;
  double blur_sigma = 0.0;
  bool solarized = false;
};

struct AugmentedView {
  Image image;
  TransformRecord record;
  int source_id = -1;
};

// Stage probabilities default to the standard pipeline; zeroing them and
// requesting a full-area crop turns the pipeline into a resize.
struct AugmentPolicy {
  int target = 32;
  double jitter_u = 0.4;
  double jitter_v = 0.1;
  double p_mirror = 0.5;
  double p_jitter = 0.8;
  double p_grayscale = 0.2;
  bool blur_enabled = false;
  double p_blur = 0.5;
  bool solarize_enabled = false;
  double p_solarize = 0.2;
  double min_area = 0.08;
  double max_area = 1.0;

  static AugmentPolicy identity(int target_res) {
    AugmentPolicy p;
    p.target = target_res;
    p.jitter_u = 0.0;
    p.jitter_v = 0.0;
    p.p_mirror = 0.0;
    p.p_jitter = 0.0;
    p.p_grayscale = 0.0;
    p.blur_enabled = false;
    p.solarize_enabled = false;
    p.min_area = 1.0;
    p.max_area = 1.0;
    return p;
  }
};

inline double relative_crop_area(const TransformRecord& r, int W, int H) {
  return static_cast<double>(r.crop_width) * r.crop_height /
         (static_cast<double>(W) * H);
}

}  // namespace stec::img
