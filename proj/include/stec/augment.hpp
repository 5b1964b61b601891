#pragma once

#include "stec/image.hpp"
#include "stec/rng.hpp"

namespace stec::img {

// luma weights shared by contrast, saturation and grayscale
inline constexpr double kLumaR = 0.2989;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

struct CropParams {
  int left = 0, top = 0, width = 0, height = 0;
};

// Bilinear sampling with half-pixel centers; coordinates clamp at borders.
Image resize_bilinear(const Image& src, int src_left, int src_top, int src_w,
                      int src_h, int target);

// area uniform in [min_area, max_area] of the source, aspect log-uniform in
// [3/4, 4/3]; bounded rejection (10 tries) then a centered fallback crop
CropParams sample_crop(int W, int H, double min_area, double max_area, Rng& rng);
Image random_resized_crop(const Image& src, Rng& rng, int target,
                          CropParams& out_params, double min_area = 0.08,
                          double max_area = 1.0);

Image mirror_horizontal(const Image& src);

// RGB <-> HSV in unit range; gray pixels carry saturation 0 and hue 0
void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

Image adjust_brightness(const Image& src, double factor);
Image adjust_contrast(const Image& src, double factor);
Image adjust_saturation(const Image& src, double factor);
Image adjust_hue(const Image& src, double shift);

// four adjustments in a recorded random order, each factor resampled
Image color_jitter(const Image& src, Rng& rng, double u, double v,
                   ColorParams& out_params);

Image to_grayscale(const Image& src);
Image gaussian_blur(const Image& src, double sigma, int kernel_edge);
Image solarize(const Image& src, double threshold = 0.5);

// full ordered pipeline: crop, mirror, jitter, grayscale, blur, solarize
AugmentedView augment_view(const Image& src, const AugmentPolicy& policy,
                           Rng& rng, int source_id = -1);

}  // namespace stec::img
