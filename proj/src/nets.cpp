#include "stec/nets.hpp"

#include "stec/iobits.hpp"
#include "stec/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace stec::model {

using grad::Graph;
using grad::NodeId;
using grad::Tensor;

void ema_update(ParamStore& store, double decay) {
  if (!store.has_shadow())
    throw std::logic_error("ema_update: store carries no EMA shadow");
  if (decay < 0.0 || decay > 1.0)
    throw std::invalid_argument("ema_update: decay must lie in [0,1]");
  for (auto& [name, sh] : store.shadow_map())
    sh.data = decay * sh.data + (1.0 - decay) * store.tensor(name).data;
}

double ema_decay_at(long step, long total_steps, double tau0) {
  if (total_steps <= 0) return tau0;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - tau0) * (std::cos(3.14159265358979323846 * t) + 1.0) / 2.0;
}

namespace {

Rng name_rng(std::uint64_t seed, const std::string& name) {
  return Rng(derive_seed(seed, fnv1a64(name)));
}

Tensor he_weights(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                  const std::string& name) {
  Rng rng = name_rng(seed, name);
  const double sd = std::sqrt(2.0 / static_cast<double>(rows));
  Tensor t = Tensor::zeros({rows, cols});
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = sd * rng.gaussian();
  return t;
}

Tensor conv_weights(Eigen::Index F, Eigen::Index C, Eigen::Index k,
                    std::uint64_t seed, const std::string& name) {
  Rng rng = name_rng(seed, name);
  const double fan_in = static_cast<double>(C * k * k);
  const double sd = std::sqrt(2.0 / fan_in);
  Tensor t = Tensor::zeros({F, C, k, k});
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = sd * rng.gaussian();
  return t;
}

void add_dense(ParamStore& ps, const std::string& base, Eigen::Index in,
               Eigen::Index out, std::uint64_t seed) {
  ps.add(base + ".w", he_weights(in, out, seed, base + ".w"));
  ps.add(base + ".b", Tensor::zeros({out}),
         ParamFlags{true, true, true});
}

void add_bn(ParamStore& ps, const std::string& base, Eigen::Index dim) {
  ps.add(base + ".gamma", Tensor::full({dim}, 1.0), ParamFlags{true, true, true});
  ps.add(base + ".beta", Tensor::zeros({dim}), ParamFlags{true, true, true});
  ps.add(base + ".rm", Tensor::zeros({dim}), ParamFlags{false, true, true});
  ps.add(base + ".rv", Tensor::full({dim}, 1.0), ParamFlags{false, true, true});
}

// graph leaves + batch_norm wiring for one BN layer
NodeId bn_layer(Graph& g, ParamStore& ps, NodeId x, const std::string& base,
                Mode mode, bool use_shadow) {
  const NodeId gamma = ps.leaf(g, base + ".gamma", use_shadow);
  const NodeId beta = ps.leaf(g, base + ".beta", use_shadow);
  grad::BatchNormState st;
  if (use_shadow) {
    st.running_mean = &ps.shadow(base + ".rm");
    st.running_var = &ps.shadow(base + ".rv");
  } else {
    st.running_mean = &ps.tensor(base + ".rm");
    st.running_var = &ps.tensor(base + ".rv");
  }
  const bool train = mode == Mode::train;
  return grad::batch_norm(g, x, gamma, beta, st, train,
                          /*update_running=*/train && !use_shadow);
}

NodeId dense(Graph& g, ParamStore& ps, NodeId x, const std::string& base,
             bool use_shadow) {
  const NodeId w = ps.leaf(g, base + ".w", use_shadow);
  const NodeId b = ps.leaf(g, base + ".b", use_shadow);
  return grad::add_bias(g, grad::matmul(g, x, w), b);
}

}  // namespace

void init_encoder(ParamStore& ps, const EncoderCfg& cfg, std::uint64_t seed,
                  const std::string& prefix) {
  if (cfg.feature_dim < 8)
    throw std::invalid_argument("EncoderCfg: feature_dim must be >= 8");
  const auto widths = cfg.effective_widths();
  if (cfg.kind == "mlp") {
    Eigen::Index in = 3L * cfg.resolution * cfg.resolution;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string base = prefix + "fc" + std::to_string(i);
      add_dense(ps, base, in, widths[i], seed);
      add_bn(ps, base + ".bn", widths[i]);
      in = widths[i];
    }
    add_dense(ps, prefix + "out", in, cfg.feature_dim, seed);
  } else if (cfg.kind == "smallconv") {
    Eigen::Index in_ch = 3;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string base = prefix + "conv" + std::to_string(i);
      ps.add(base + ".w", conv_weights(widths[i], in_ch, 3, seed, base + ".w"));
      ps.add(base + ".b", Tensor::zeros({widths[i]}), ParamFlags{true, true, true});
      add_bn(ps, base + ".bn", widths[i]);
      in_ch = widths[i];
    }
    add_dense(ps, prefix + "out", in_ch, cfg.feature_dim, seed);
  } else {
    throw std::invalid_argument("EncoderCfg: unknown kind '" + cfg.kind + "'");
  }
}

void init_projector(ParamStore& ps, int in_dim, const HeadCfg& cfg,
                    std::uint64_t seed, const std::string& prefix) {
  add_dense(ps, prefix + "fc0", in_dim, cfg.g_hidden, seed);
  add_bn(ps, prefix + "fc0.bn", cfg.g_hidden);
  add_dense(ps, prefix + "fc1", cfg.g_hidden, cfg.g_out, seed);
  add_bn(ps, prefix + "out.bn", cfg.g_out);
}

void init_predictor(ParamStore& ps, const HeadCfg& cfg, std::uint64_t seed,
                    const std::string& prefix) {
  add_dense(ps, prefix + "fc0", cfg.g_out, cfg.g_hidden, seed);
  add_bn(ps, prefix + "fc0.bn", cfg.g_hidden);
  add_dense(ps, prefix + "fc1", cfg.g_hidden, cfg.g_out, seed);
}

void init_manip_head(ParamStore& ps, int in_dim, int out_dim, const HeadCfg& cfg,
                     std::uint64_t seed, const std::string& prefix) {
  add_dense(ps, prefix + "fc0", 2L * in_dim, cfg.psi_hidden, seed);
  add_bn(ps, prefix + "fc0.bn", cfg.psi_hidden);
  add_dense(ps, prefix + "fc1", cfg.psi_hidden, out_dim, seed);
}

void init_probe(ParamStore& ps, int in_dim, int classes, std::uint64_t seed,
                const std::string& prefix) {
  add_dense(ps, prefix + "fc", in_dim, classes, seed);
}

NodeId encode(Graph& g, ParamStore& ps, NodeId images, const EncoderCfg& cfg,
              Mode mode, const std::string& prefix, bool use_shadow) {
  const Tensor& in = g.value(images);
  if (in.rank() != 4 || in.dim(1) != 3 || in.dim(2) != cfg.resolution ||
      in.dim(3) != cfg.resolution)
    throw std::invalid_argument(
        "encode: input resolution does not match encoder configuration, got " +
        grad::shape_str(in.shape));
  const auto widths = cfg.effective_widths();
  const Eigen::Index B = in.dim(0);

  if (cfg.kind == "mlp") {
    NodeId x = grad::reshape(g, images, {B, in.numel() / B});
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string base = prefix + "fc" + std::to_string(i);
      x = dense(g, ps, x, base, use_shadow);
      x = bn_layer(g, ps, x, base + ".bn", mode, use_shadow);
      x = grad::relu(g, x);
    }
    return dense(g, ps, x, prefix + "out", use_shadow);
  }

  // smallconv: stride-2 3x3 convs, spatial BN, ReLU, global average pool
  NodeId x = images;
  Eigen::Index h = cfg.resolution, w = cfg.resolution;
  Eigen::Index ch = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string base = prefix + "conv" + std::to_string(i);
    const NodeId cw = ps.leaf(g, base + ".w", use_shadow);
    const NodeId cb = ps.leaf(g, base + ".b", use_shadow);
    x = grad::conv2d(g, x, cw, cb, /*stride=*/2, /*pad=*/1);
    h = (h + 2 - 3) / 2 + 1;
    w = (w + 2 - 3) / 2 + 1;
    ch = widths[i];
    NodeId rows = grad::rows_from_nchw(g, x);
    rows = bn_layer(g, ps, rows, base + ".bn", mode, use_shadow);
    rows = grad::relu(g, rows);
    x = grad::nchw_from_rows(g, rows, B, ch, h, w);
  }
  x = grad::global_avg_pool(g, x);
  return dense(g, ps, x, prefix + "out", use_shadow);
}

NodeId project(Graph& g, ParamStore& ps, NodeId h, const HeadCfg& /*cfg*/,
               Mode mode, const std::string& prefix, bool use_shadow,
               bool target_copy) {
  NodeId x = dense(g, ps, h, prefix + "fc0", use_shadow);
  x = bn_layer(g, ps, x, prefix + "fc0.bn", mode, use_shadow);
  x = grad::relu(g, x);
  x = dense(g, ps, x, prefix + "fc1", use_shadow);
  if (!target_copy) x = bn_layer(g, ps, x, prefix + "out.bn", mode, use_shadow);
  return x;
}

NodeId predict(Graph& g, ParamStore& ps, NodeId z, const HeadCfg& /*cfg*/,
               Mode mode, const std::string& prefix) {
  NodeId x = dense(g, ps, z, prefix + "fc0", false);
  x = bn_layer(g, ps, x, prefix + "fc0.bn", mode, false);
  x = grad::relu(g, x);
  return dense(g, ps, x, prefix + "fc1", false);
}

NodeId manip_logits(Graph& g, ParamStore& ps, NodeId h, NodeId hp,
                    const HeadCfg& /*cfg*/, Mode mode, const std::string& prefix) {
  NodeId x = grad::concat_cols(g, h, hp);
  x = dense(g, ps, x, prefix + "fc0", false);
  x = bn_layer(g, ps, x, prefix + "fc0.bn", mode, false);
  x = grad::relu(g, x);
  return dense(g, ps, x, prefix + "fc1", false);
}

NodeId probe_logits(Graph& g, ParamStore& ps, NodeId h,
                    const std::string& prefix) {
  return dense(g, ps, h, prefix + "fc", false);
}

NodeId phi_pairs(Graph& g, ParamStore& ps, NodeId h, NodeId hp,
                 const HeadCfg& cfg, Mode mode, const std::string& prefix) {
  NodeId za = project(g, ps, h, cfg, mode, prefix);
  NodeId zb = project(g, ps, hp, cfg, mode, prefix);
  za = grad::l2_normalize_rows(g, za);
  zb = grad::l2_normalize_rows(g, zb);
  return grad::rowsum(g, grad::mul(g, za, zb));
}

}  // namespace stec::model
