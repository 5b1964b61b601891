#pragma once

#include "stec/affine.hpp"
#include "stec/augment.hpp"
#include "stec/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stec::data {

struct Dataset {
  int height = 0;
  int width = 0;
  int class_count = 0;
  std::vector<img::Image> images;
  std::vector<int> labels;

  int count() const { return static_cast<int>(images.size()); }
};

// Paired augmented views with their efference copies. Views 2i and 2i+1
// come from the same source; ego_actions[i] encodes view 2i -> view 2i+1.
struct Batch {
  std::vector<img::AugmentedView> views;  // 2B
  std::vector<int> pair_index;            // involution without fixed points
  std::vector<act::EgoAction> ego_actions;  // B
  std::vector<bool> masks;                  // B, false = excluded from L_manip
  int source_width = 0;
  int source_height = 0;

  int pairs() const { return static_cast<int>(ego_actions.size()); }
};

// colored geometric shapes (class = shape kind) on textured backgrounds
Dataset gen_synthetic(int n, int classes, int resolution, std::uint64_t seed);

// directory format: manifest.json + images.f64 + labels.i32 (little-endian)
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Deterministic in (dataset, seed); augmentation is seeded per (item, view),
// so parallel assembly matches sequential assembly bit for bit.
Batch make_batch(const Dataset& ds, int B, const img::AugmentPolicy& policy,
                 const act::BinningSpec& binning, std::uint64_t batch_seed);

// [n, 3, H, W] encoder input from a span of views
grad::Tensor views_to_tensor(const std::vector<img::AugmentedView>& views);
grad::Tensor images_to_tensor(const std::vector<img::Image>& images);

}  // namespace stec::data
