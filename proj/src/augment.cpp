#include "stec/augment.hpp"

#include <algorithm>
#include <cmath>

namespace stec::img {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double luma(double r, double g, double b) {
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

}  // namespace

Image resize_bilinear(const Image& src, int src_left, int src_top, int src_w,
                      int src_h, int target) {
  Image out(target, target);
  const double sx_scale = static_cast<double>(src_w) / target;
  const double sy_scale = static_cast<double>(src_h) / target;
  for (int i = 0; i < target; ++i) {
    double sy = src_top + (i + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int j = 0; j < target; ++j) {
      double sx = src_left + (j + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top =
            src.at(y0, x0, c) * (1.0 - fx) + src.at(y0, x1, c) * fx;
        const double bot =
            src.at(y1, x0, c) * (1.0 - fx) + src.at(y1, x1, c) * fx;
        out.at(i, j, c) = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

CropParams sample_crop(int W, int H, double min_area, double max_area, Rng& rng) {
  const double area_total = static_cast<double>(W) * H;
  const double log_lo = std::log(3.0 / 4.0);
  const double log_hi = std::log(4.0 / 3.0);
  double area = area_total, ratio = 1.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    area = rng.uniform(min_area, max_area) * area_total;
    ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(area * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(area / ratio)));
    if (w >= 1 && w <= W && h >= 1 && h <= H) {
      CropParams p;
      p.width = w;
      p.height = h;
      p.left = rng.uniform_int(0, W - w);
      p.top = rng.uniform_int(0, H - h);
      return p;
    }
  }
  // centered crop at the last sampled area
  CropParams p;
  p.width = std::clamp(static_cast<int>(std::lround(std::sqrt(area * ratio))), 1, W);
  p.height = std::clamp(static_cast<int>(std::lround(std::sqrt(area / ratio))), 1, H);
  p.left = (W - p.width) / 2;
  p.top = (H - p.height) / 2;
  return p;
}

Image random_resized_crop(const Image& src, Rng& rng, int target,
                          CropParams& out_params, double min_area,
                          double max_area) {
  out_params = sample_crop(src.width, src.height, min_area, max_area, rng);
  return resize_bilinear(src, out_params.left, out_params.top, out_params.width,
                         out_params.height, target);
}

Image mirror_horizontal(const Image& src) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = src.at(y, src.width - 1 - x, c);
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  if (s <= 0.0) {
    r = g = b = v;
    return;
  }
  h -= std::floor(h);  // into [0,1)
  const double h6 = h * 6.0;
  const int i = std::min(5, static_cast<int>(h6));
  const double f = h6 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

Image adjust_brightness(const Image& src, double factor) {
  Image out = src;
  out.data = (src.data * factor).min(1.0).max(0.0);
  return out;
}

Image adjust_contrast(const Image& src, double factor) {
  double mu = 0.0;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      mu += luma(src.at(y, x, 0), src.at(y, x, 1), src.at(y, x, 2));
  mu /= static_cast<double>(src.height) * src.width;
  Image out = src;
  out.data = (factor * (src.data - mu) + mu).min(1.0).max(0.0);
  return out;
}

Image adjust_saturation(const Image& src, double factor) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      const double l = luma(src.at(y, x, 0), src.at(y, x, 1), src.at(y, x, 2));
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = clamp01(factor * (src.at(y, x, c) - l) + l);
    }
  return out;
}

Image adjust_hue(const Image& src, double shift) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double h, s, v;
      rgb_to_hsv(src.at(y, x, 0), src.at(y, x, 1), src.at(y, x, 2), h, s, v);
      h += shift;
      h -= std::floor(h);
      double r, g, b;
      hsv_to_rgb(h, s, v, r, g, b);
      out.at(y, x, 0) = clamp01(r);
      out.at(y, x, 1) = clamp01(g);
      out.at(y, x, 2) = clamp01(b);
    }
  return out;
}

Image color_jitter(const Image& src, Rng& rng, double u, double v,
                   ColorParams& out_params) {
  out_params.applied = true;
  out_params.brightness = rng.uniform(1.0 - u, 1.0 + u);
  out_params.contrast = rng.uniform(1.0 - u, 1.0 + u);
  out_params.saturation = rng.uniform(1.0 - u, 1.0 + u);
  out_params.hue_shift = rng.uniform(-v, v);
  std::array<int, 4> order = {0, 1, 2, 3};
  for (int i = 3; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  out_params.order = order;

  Image out = src;
  for (int stage : order) {
    switch (stage) {
      case 0: out = adjust_brightness(out, out_params.brightness); break;
      case 1: out = adjust_contrast(out, out_params.contrast); break;
      case 2: out = adjust_saturation(out, out_params.saturation); break;
      default: out = adjust_hue(out, out_params.hue_shift); break;
    }
  }
  return out;
}

Image to_grayscale(const Image& src) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      const double l = luma(src.at(y, x, 0), src.at(y, x, 1), src.at(y, x, 2));
      out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = l;
    }
  return out;
}

Image gaussian_blur(const Image& src, double sigma, int kernel_edge) {
  if (kernel_edge < 1) kernel_edge = 1;
  if (kernel_edge % 2 == 0) ++kernel_edge;
  const int half = kernel_edge / 2;
  Eigen::ArrayXd kernel(kernel_edge);
  for (int i = -half; i <= half; ++i)
    kernel[i + half] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  kernel /= kernel.sum();

  // separable pass, replicated borders
  Image tmp(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int xx = std::clamp(x + k, 0, src.width - 1);
          acc += kernel[k + half] * src.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int yy = std::clamp(y + k, 0, src.height - 1);
          acc += kernel[k + half] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = clamp01(acc);
      }
  return out;
}

Image solarize(const Image& src, double threshold) {
  Image out = src;
  for (long i = 0; i < out.numel(); ++i)
    if (out.data[i] > threshold) out.data[i] = 1.0 - out.data[i];
  return out;
}

AugmentedView augment_view(const Image& src, const AugmentPolicy& policy,
                           Rng& rng, int source_id) {
  AugmentedView view;
  view.source_id = source_id;
  TransformRecord& rec = view.record;

  CropParams crop;
  if (policy.min_area >= 1.0 && policy.max_area >= 1.0) {
    crop.left = 0;
    crop.top = 0;
    crop.width = src.width;
    crop.height = src.height;
    view.image = resize_bilinear(src, 0, 0, src.width, src.height, policy.target);
  } else {
    view.image = random_resized_crop(src, rng, policy.target, crop,
                                     policy.min_area, policy.max_area);
  }
  rec.crop_left = crop.left;
  rec.crop_top = crop.top;
  rec.crop_width = crop.width;
  rec.crop_height = crop.height;

  rec.mirror = rng.bernoulli(policy.p_mirror) ? -1 : 1;
  if (rec.mirror < 0) view.image = mirror_horizontal(view.image);

  if (rng.bernoulli(policy.p_jitter)) {
    view.image =
        color_jitter(view.image, rng, policy.jitter_u, policy.jitter_v, rec.color);
  }

  rec.grayscale = rng.bernoulli(policy.p_grayscale);
  if (rec.grayscale) view.image = to_grayscale(view.image);

  if (policy.blur_enabled && rng.bernoulli(policy.p_blur)) {
    rec.blurred = true;
    rec.blur_sigma = rng.uniform(0.1, 2.0) * policy.target / 224.0;
    const int edge = static_cast<int>(std::lround(0.1 * policy.target));
    view.image = gaussian_blur(view.image, rec.blur_sigma, edge);
  }

  if (policy.solarize_enabled && rng.bernoulli(policy.p_solarize)) {
    rec.solarized = true;
    view.image = solarize(view.image);
  }
  return view;
}

}  // namespace stec::img
