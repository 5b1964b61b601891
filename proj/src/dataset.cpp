#include "stec/dataset.hpp"

#include "stec/iobits.hpp"
#include "stec/parallel.hpp"
#include "stec/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace stec::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kShapeKinds = 8;

bool inside_shape(int kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (kind % kShapeKinds) {
    case 0:  // disc
      return dx * dx + dy * dy < r * r;
    case 1:  // square
      return ax < r && ay < r;
    case 2:  // triangle, apex up
      return dy > -r && dy < r && ax < (dy + r) * 0.5;
    case 3:  // plus
      return (ax < r / 3.0 && ay < r) || (ay < r / 3.0 && ax < r);
    case 4: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 < r * r && d2 > 0.25 * r * r;
    }
    case 5:  // diamond
      return ax + ay < r;
    case 6:  // horizontal bars
      return ax < r && ay < r && (std::fmod(dy + r, r * 0.66) < r * 0.33);
    default:  // checker square
      return ax < r && ay < r &&
             ((static_cast<int>((dx + r) / (r * 0.5)) +
               static_cast<int>((dy + r) / (r * 0.5))) %
                  2 ==
              0);
  }
}

void write_blob(const fs::path& p, const void* data, std::size_t bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("short write to " + p.string());
}

std::vector<char> read_blob(const fs::path& p) {
  std::ifstream f(p, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  const auto n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw std::runtime_error("short read from " + p.string());
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Dataset gen_synthetic(int n, int classes, int resolution, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("gen_synthetic: classes >= 2");
  if (n < 1) throw std::invalid_argument("gen_synthetic: n >= 1");
  Dataset ds;
  ds.height = ds.width = resolution;
  ds.class_count = classes;
  ds.images.resize(static_cast<std::size_t>(n));
  ds.labels.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) ds.labels[static_cast<std::size_t>(i)] = i % classes;

  parallel_for(n, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
    const int label = ds.labels[static_cast<std::size_t>(i)];
    img::Image im(resolution, resolution);

    // textured background: two random colors under a sinusoidal field
    double bg0[3], bg1[3];
    for (int c = 0; c < 3; ++c) {
      bg0[c] = rng.uniform(0.0, 0.45);
      bg1[c] = rng.uniform(0.45, 0.9);
    }
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double freq = rng.uniform(1.5, 4.0) * 6.283185307179586 / resolution;
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double kx = std::cos(ang) * freq, ky = std::sin(ang) * freq;

    // class-conditioned shape color: base hue from the label, jittered
    const double hue =
        std::fmod(static_cast<double>(label) / classes + rng.uniform(-0.03, 0.03) + 1.0,
                  1.0);
    double sr, sg, sb;
    img::hsv_to_rgb(hue, rng.uniform(0.7, 0.95), rng.uniform(0.75, 1.0), sr, sg, sb);

    const double r = rng.uniform(0.22, 0.38) * resolution;
    const double cx = rng.uniform(0.35, 0.65) * resolution;
    const double cy = rng.uniform(0.35, 0.65) * resolution;

    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        const double t = 0.5 * (1.0 + std::sin(kx * x + ky * y + phase));
        const bool in_shape = inside_shape(label, x - cx, y - cy, r);
        for (int c = 0; c < 3; ++c) {
          double v;
          if (in_shape)
            v = (c == 0 ? sr : c == 1 ? sg : sb);
          else
            v = bg0[c] * (1.0 - t) + bg1[c] * t;
          v += rng.uniform(-0.03, 0.03);
          im.at(y, x, c) = std::clamp(v, 0.0, 1.0);
        }
      }
    ds.images[static_cast<std::size_t>(i)] = std::move(im);
  });
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  const int n = ds.count();
  const long per = static_cast<long>(ds.height) * ds.width * 3;

  std::vector<double> blob(static_cast<std::size_t>(n) * static_cast<std::size_t>(per));
  for (int i = 0; i < n; ++i)
    std::memcpy(blob.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(per),
                ds.images[static_cast<std::size_t>(i)].data.data(),
                static_cast<std::size_t>(per) * sizeof(double));
  to_little_endian(blob);

  std::vector<std::int32_t> labels(ds.labels.begin(), ds.labels.end());
  if (!host_little_endian())
    for (auto& l : labels)
      l = static_cast<std::int32_t>(byteswap32(static_cast<std::uint32_t>(l)));

  json manifest;
  manifest["version"] = 1;
  manifest["count"] = n;
  manifest["height"] = ds.height;
  manifest["width"] = ds.width;
  manifest["channels"] = 3;
  manifest["class_count"] = ds.class_count;
  manifest["dtype"] = "f64";
  manifest["endianness"] = "little";
  manifest["images_checksum"] =
      hex64(fnv1a64(blob.data(), blob.size() * sizeof(double)));
  manifest["labels_checksum"] =
      hex64(fnv1a64(labels.data(), labels.size() * sizeof(std::int32_t)));

  write_blob(fs::path(dir) / "images.f64", blob.data(), blob.size() * sizeof(double));
  write_blob(fs::path(dir) / "labels.i32", labels.data(),
             labels.size() * sizeof(std::int32_t));
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("dataset manifest missing in " + dir);
  json manifest = json::parse(mf);
  if (manifest.value("version", 0) != 1)
    throw std::runtime_error("dataset manifest: unsupported version");
  const std::string endian = manifest.value("endianness", "");
  if (endian != "little")
    throw std::runtime_error("dataset blob endianness '" + endian +
                             "' is not supported (expected 'little')");
  if (manifest.value("dtype", "") != "f64")
    throw std::runtime_error("dataset manifest: unsupported dtype");

  Dataset ds;
  const int n = manifest.at("count").get<int>();
  ds.height = manifest.at("height").get<int>();
  ds.width = manifest.at("width").get<int>();
  ds.class_count = manifest.at("class_count").get<int>();
  const long per = static_cast<long>(ds.height) * ds.width * 3;

  auto raw = read_blob(fs::path(dir) / "images.f64");
  if (raw.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(per) * sizeof(double))
    throw std::runtime_error("dataset images blob: size mismatch (truncated?)");
  if (hex64(fnv1a64(raw.data(), raw.size())) !=
      manifest.at("images_checksum").get<std::string>())
    throw std::runtime_error("dataset images blob: checksum mismatch");

  auto rawl = read_blob(fs::path(dir) / "labels.i32");
  if (rawl.size() != static_cast<std::size_t>(n) * sizeof(std::int32_t))
    throw std::runtime_error("dataset labels blob: size mismatch");
  if (hex64(fnv1a64(rawl.data(), rawl.size())) !=
      manifest.at("labels_checksum").get<std::string>())
    throw std::runtime_error("dataset labels blob: checksum mismatch");

  ds.images.resize(static_cast<std::size_t>(n));
  std::vector<double> vals(static_cast<std::size_t>(per));
  for (int i = 0; i < n; ++i) {
    std::memcpy(vals.data(), raw.data() + static_cast<std::size_t>(i) *
                                              static_cast<std::size_t>(per) * sizeof(double),
                static_cast<std::size_t>(per) * sizeof(double));
    from_little_endian(vals);
    img::Image im(ds.height, ds.width);
    std::memcpy(im.data.data(), vals.data(), static_cast<std::size_t>(per) * sizeof(double));
    ds.images[static_cast<std::size_t>(i)] = std::move(im);
  }
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::int32_t v;
    std::memcpy(&v, rawl.data() + static_cast<std::size_t>(i) * sizeof(std::int32_t),
                sizeof(std::int32_t));
    if (!host_little_endian())
      v = static_cast<std::int32_t>(byteswap32(static_cast<std::uint32_t>(v)));
    ds.labels[static_cast<std::size_t>(i)] = v;
  }
  return ds;
}

Batch make_batch(const Dataset& ds, int B, const img::AugmentPolicy& policy,
                 const act::BinningSpec& binning, std::uint64_t batch_seed) {
  const int n = ds.count();
  if (B > n)
    throw std::invalid_argument("make_batch: B exceeds dataset size");
  Batch batch;
  batch.source_width = ds.width;
  batch.source_height = ds.height;

  // B distinct sources via partial Fisher-Yates
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng idx_rng(derive_seed(batch_seed, 0));
  for (int i = 0; i < B; ++i) {
    const int j = i + static_cast<int>(idx_rng.uniform_index(
                          static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  batch.views.resize(static_cast<std::size_t>(2 * B));
  batch.pair_index.resize(static_cast<std::size_t>(2 * B));
  batch.ego_actions.resize(static_cast<std::size_t>(B));
  batch.masks.resize(static_cast<std::size_t>(B));

  parallel_for(2 * B, [&](int slot) {
    const int item = slot / 2;
    const int view = slot % 2;
    const int src = order[static_cast<std::size_t>(item)];
    Rng rng(derive_seed(batch_seed, static_cast<std::uint64_t>(item) + 1,
                        static_cast<std::uint64_t>(view) + 1));
    batch.views[static_cast<std::size_t>(slot)] =
        augment_view(ds.images[static_cast<std::size_t>(src)], policy, rng, src);
  });

  for (int i = 0; i < B; ++i) {
    batch.pair_index[static_cast<std::size_t>(2 * i)] = 2 * i + 1;
    batch.pair_index[static_cast<std::size_t>(2 * i + 1)] = 2 * i;
    const auto& rec_x = batch.views[static_cast<std::size_t>(2 * i)].record;
    const auto& rec_xp = batch.views[static_cast<std::size_t>(2 * i + 1)].record;
    batch.ego_actions[static_cast<std::size_t>(i)] =
        act::make_ego_action(rec_x, rec_xp, ds.width, ds.height, binning);
    batch.masks[static_cast<std::size_t>(i)] =
        batch.ego_actions[static_cast<std::size_t>(i)].valid;
  }
  return batch;
}

grad::Tensor views_to_tensor(const std::vector<img::AugmentedView>& views) {
  std::vector<img::Image> imgs;
  imgs.reserve(views.size());
  for (const auto& v : views) imgs.push_back(v.image);
  return images_to_tensor(imgs);
}

grad::Tensor images_to_tensor(const std::vector<img::Image>& images) {
  if (images.empty()) return grad::Tensor::zeros({0, 3, 0, 0});
  const Eigen::Index n = static_cast<Eigen::Index>(images.size());
  const Eigen::Index H = images[0].height, W = images[0].width;
  grad::Tensor t = grad::Tensor::zeros({n, 3, H, W});
  for (Eigen::Index i = 0; i < n; ++i) {
    const img::Image& im = images[static_cast<std::size_t>(i)];
    if (im.height != H || im.width != W)
      throw std::invalid_argument("images_to_tensor: inconsistent resolutions");
    for (Eigen::Index c = 0; c < 3; ++c)
      for (Eigen::Index y = 0; y < H; ++y)
        for (Eigen::Index x = 0; x < W; ++x)
          t.data[((i * 3 + c) * H + y) * W + x] =
              im.data[(y * W + x) * 3 + c];
  }
  return t;
}

}  // namespace stec::data
