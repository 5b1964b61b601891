#include "stec/probe.hpp"

#include "stec/augment.hpp"
#include "stec/rng.hpp"

#include <cmath>
#include <numeric>

namespace stec::run {

using grad::Graph;
using grad::MatRM;
using grad::NodeId;
using grad::Tensor;

grad::MatRM compute_features(const model::ParamStore& store,
                             const ExperimentCfg& cfg, const data::Dataset& ds) {
  model::ParamStore local = store;  // eval mode leaves running stats alone
  const int N = ds.count();
  MatRM feats(N, cfg.encoder.feature_dim);
  const int chunk = 128;
  for (int begin = 0; begin < N; begin += chunk) {
    const int count = std::min(chunk, N - begin);
    std::vector<img::Image> images(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const img::Image& src = ds.images[static_cast<std::size_t>(begin + i)];
      images[static_cast<std::size_t>(i)] =
          (src.height == cfg.resolution && src.width == cfg.resolution)
              ? src
              : img::resize_bilinear(src, 0, 0, src.width, src.height,
                                     cfg.resolution);
    }
    Graph g;
    const NodeId x = g.leaf(data::images_to_tensor(images));
    const NodeId h =
        model::encode(g, local, x, cfg.encoder, model::Mode::eval);
    feats.middleRows(begin, count) = g.value(h).mat();
  }
  return feats;
}

namespace {

double accuracy_of(const MatRM& feats, const std::vector<int>& labels,
                   const std::vector<int>& idx, const MatRM& w,
                   const Eigen::RowVectorXd& b) {
  if (idx.empty()) return 0.0;
  int correct = 0;
  for (int i : idx) {
    Eigen::RowVectorXd logits = feats.row(i) * w + b;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

ProbeResult probe_on_features(const MatRM& features,
                              const std::vector<int>& labels, int classes,
                              const ExperimentCfg& cfg) {
  const int N = static_cast<int>(features.rows());
  const int D = static_cast<int>(features.cols());
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("probe: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= classes)
      throw std::invalid_argument("probe: label outside configured class count");

  // interleaved deterministic split
  const int test_stride =
      std::max(2, static_cast<int>(std::lround(1.0 / (1.0 - cfg.probe_train_frac))));
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < N; ++i)
    (i % test_stride == test_stride - 1 ? test_idx : train_idx).push_back(i);

  model::ParamStore ps;
  model::init_probe(ps, D, classes, cfg.seed);

  const int B = std::min<int>(cfg.probe_batch, static_cast<int>(train_idx.size()));
  const long steps_per_epoch =
      std::max<long>(1, static_cast<long>(train_idx.size()) / B);
  const long total_steps = steps_per_epoch * cfg.probe_epochs;
  const long warmup = std::min<long>(total_steps / 10, 10 * steps_per_epoch);
  const double peak = cfg.probe_lr * B / 256.0;

  Tensor buf_w = Tensor::zeros(ps.tensor("probe.fc.w").shape);
  Tensor buf_b = Tensor::zeros(ps.tensor("probe.fc.b").shape);

  Rng shuffle_rng(derive_seed(cfg.seed, 0x9806e));
  std::vector<int> order = train_idx;
  long step = 0;
  for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[static_cast<std::size_t>(j)]);
    }
    for (long sb = 0; sb < steps_per_epoch; ++sb, ++step) {
      Tensor xb = Tensor::zeros({B, D});
      std::vector<int> yb(static_cast<std::size_t>(B));
      for (int r = 0; r < B; ++r) {
        const int src = order[static_cast<std::size_t>((sb * B + r) % order.size())];
        xb.mat().row(r) = features.row(src);
        yb[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(src)];
      }
      Graph g;
      const NodeId x = g.leaf(std::move(xb));
      const NodeId logits = model::probe_logits(g, ps, x);
      const NodeId ce =
          grad::softmax_xent_rows(g, logits, yb, grad::Arr::Ones(B));
      g.backward(ce);

      double lr;
      if (warmup > 0 && step < warmup)
        lr = peak * static_cast<double>(step) / static_cast<double>(warmup);
      else if (total_steps == warmup)
        lr = peak;
      else
        lr = peak * 0.5 *
             (1.0 + std::cos(3.14159265358979323846 *
                             static_cast<double>(step - warmup) /
                             static_cast<double>(total_steps - warmup)));

      // Nesterov momentum; decay applies to the weight matrix only
      const double mu = 0.9;
      const auto grads = g.named_grads();
      {
        grad::Arr gw = grads.at("probe.fc.w").data +
                       cfg.probe_weight_decay * ps.tensor("probe.fc.w").data;
        buf_w.data = mu * buf_w.data + gw;
        ps.tensor("probe.fc.w").data -= lr * (gw + mu * buf_w.data);
      }
      {
        const grad::Arr& gb = grads.at("probe.fc.b").data;
        buf_b.data = mu * buf_b.data + gb;
        ps.tensor("probe.fc.b").data -= lr * (gb + mu * buf_b.data);
      }
    }
  }

  const MatRM w = ps.tensor("probe.fc.w").mat();
  const Eigen::RowVectorXd b = Eigen::Map<const Eigen::RowVectorXd>(
      ps.tensor("probe.fc.b").data.data(), classes);
  ProbeResult out;
  out.train_accuracy = accuracy_of(features, labels, train_idx, w, b);
  out.test_accuracy = accuracy_of(features, labels, test_idx, w, b);
  out.train_count = static_cast<long>(train_idx.size());
  out.test_count = static_cast<long>(test_idx.size());
  return out;
}

ProbeResult train_probe(const model::ParamStore& store, const ExperimentCfg& cfg,
                        const data::Dataset& ds) {
  if (ds.class_count < 2)
    throw std::invalid_argument("train_probe: dataset must carry >= 2 classes");
  const MatRM feats = compute_features(store, cfg, ds);
  return probe_on_features(feats, ds.labels, ds.class_count, cfg);
}

}  // namespace stec::run
