#include "stec/verify.hpp"

#include "stec/action_tree.hpp"
#include "stec/affine.hpp"
#include "stec/augment.hpp"
#include "stec/dataset.hpp"
#include "stec/losses.hpp"
#include "stec/nets.hpp"
#include "stec/optim.hpp"
#include "stec/rng.hpp"

#include <cmath>
#include <sstream>

namespace stec::verify {

using grad::Arr;
using grad::Graph;
using grad::NodeId;
using grad::Tensor;

namespace {

struct Failure {
  bool failed = false;
  std::string what;
  void set(const std::string& msg) {
    if (!failed) {
      failed = true;
      what = msg;
    }
  }
};

Tensor random_tensor(grad::Shape shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

std::vector<int> interleaved_pairs(int B) {
  std::vector<int> p(static_cast<std::size_t>(2 * B));
  for (int i = 0; i < B; ++i) {
    p[static_cast<std::size_t>(2 * i)] = 2 * i + 1;
    p[static_cast<std::size_t>(2 * i + 1)] = 2 * i;
  }
  return p;
}

img::TransformRecord random_crop_record(int W, int H, Rng& rng) {
  img::TransformRecord r;
  r.crop_width = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(W)));
  r.crop_height = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(H)));
  r.crop_left = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(W - r.crop_width + 1)));
  r.crop_top = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(H - r.crop_height + 1)));
  r.mirror = rng.bernoulli(0.5) ? -1 : 1;
  return r;
}

std::string fmt_sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace

SuiteResult run_decomposition(long trials, std::uint64_t seed) {
  SuiteResult res{"decomposition", true, ""};
  double max_split = 0.0, max_oracle = 0.0;
  Failure fail;
  for (long t = 0; t < trials && !fail.failed; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const int branches = 2 + static_cast<int>(rng.uniform_index(11));
    const auto p = loss::random_tree(branches, derive_seed(seed, static_cast<std::uint64_t>(t), 1));
    const auto q = loss::random_tree(branches, derive_seed(seed, static_cast<std::uint64_t>(t), 2));
    const auto parts = loss::kl_decompose(p, q);

    // independent oracle: direct sum over every (a_id, a_manip) leaf
    double oracle = 0.0;
    auto leaf = [](double pp, double qq) {
      return pp > 0.0 ? pp * std::log(pp / qq) : 0.0;
    };
    for (Eigen::Index b = 0; b < p.cond.size(); ++b)
      oracle += leaf(p.p_id0 * p.cond[b], q.p_id0 * q.cond[b]);
    oracle += leaf(p.p_id1(), q.p_id1());

    const double split_gap = std::abs(parts.joint - (parts.id_part + parts.manip_part));
    const double oracle_gap = std::abs(parts.joint - oracle);
    max_split = std::max(max_split, split_gap);
    max_oracle = std::max(max_oracle, oracle_gap);
    if (split_gap >= 1e-10)
      fail.set("trial " + std::to_string(t) + ": |L-(L_id+L_manip)|=" +
               fmt_sci(split_gap));
    if (oracle_gap >= 1e-10)
      fail.set("trial " + std::to_string(t) + ": joint disagrees with oracle by " +
               fmt_sci(oracle_gap));
  }
  res.passed = !fail.failed;
  res.detail = fail.failed
                   ? fail.what
                   : "max|L-(L_id+L_manip)|=" + fmt_sci(max_split) +
                         ", max|joint-oracle|=" + fmt_sci(max_oracle) + " over " +
                         std::to_string(trials) + " tree pairs";
  return res;
}

SuiteResult run_bound(long trials, std::uint64_t seed) {
  SuiteResult res{"bound", true, ""};
  const int batch_sizes[] = {4, 16, 64};
  const double taus[] = {0.1, 0.5, 1.0};
  long checks = 0;
  double max_gap = -1e300;
  Failure fail;
  for (long t = 0; t < trials && !fail.failed; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), 7));
    const int B = batch_sizes[t % 3];
    const double tau = taus[(t / 3) % 3];
    grad::MatRM z(2 * B, 16);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    const auto rep = loss::verify_upper_bound(z, interleaved_pairs(B), tau);
    checks += rep.checks;
    max_gap = std::max(max_gap, rep.max_gap);
    if (!rep.ok())
      fail.set("trial " + std::to_string(t) + " (B=" + std::to_string(B) +
               ", tau=" + std::to_string(tau) + "): " + rep.describe());
  }
  // singleton candidate set degenerates to equality
  {
    grad::MatRM z(2, 8);
    Rng rng(derive_seed(seed, 0x51));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    const auto rep = loss::verify_upper_bound(z, interleaved_pairs(1), 0.5);
    if (!rep.ok() || std::abs(rep.max_gap) > 1e-12)
      fail.set("singleton case: " + rep.describe());
    ++checks;
  }
  res.passed = !fail.failed;
  res.detail = fail.failed ? fail.what
                           : std::to_string(checks) + " anchor checks, 0 violations, max gap " +
                                 fmt_sci(max_gap);
  return res;
}

SuiteResult run_recovery(std::uint64_t seed) {
  SuiteResult res{"recovery", true, ""};
  Failure fail;
  Rng rng(derive_seed(seed, 0xec));

  // NT-Xent anchor closed forms
  {
    Eigen::VectorXd sims(2);
    sims << 1.0, 0.0;
    const double got = loss::ntxent_anchor_term(sims, 0, 1.0);
    const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    if (std::abs(got - want) > 1e-12)
      fail.set("ntxent fixture: got " + std::to_string(got) + ", want " +
               std::to_string(want));
    // shift invariance
    Eigen::VectorXd shifted = sims.array() + 3.7;
    if (std::abs(loss::ntxent_anchor_term(shifted, 0, 1.0) - got) > 1e-12)
      fail.set("ntxent shift invariance violated");
  }
  {
    // identical embeddings: loss = log(candidate count)
    const int B = 6;
    Graph g;
    Tensor z = Tensor::zeros({2 * B, 5});
    for (Eigen::Index i = 0; i < 2 * B; ++i) z.mat()(i, 2) = 1.0;
    auto id = loss::ntxent_id_loss(g, g.leaf(z), interleaved_pairs(B), 0.5);
    const double want = std::log(static_cast<double>(2 * B - 1));
    if (std::abs(g.value(id.node).scalar_value() - want) > 1e-9)
      fail.set("ntxent uniform case: got " +
               std::to_string(g.value(id.node).scalar_value()) + ", want log " +
               std::to_string(2 * B - 1));
  }

  // BYOL-style fixtures (normal-distribution identity model)
  {
    Graph g;
    Tensor z = random_tensor({4, 6}, rng);
    auto node = loss::byol_id_loss(g, g.leaf(z), g.leaf(z), interleaved_pairs(2));
    // equal branches but pair-permuted rows differ; build a truly equal case:
    Tensor u = Tensor::zeros({2, 3});
    u.mat() << 1, 0, 0, 1, 0, 0;  // both views identical unit vectors
    Graph g2;
    auto eq = loss::byol_id_loss(g2, g2.leaf(u), g2.leaf(u), interleaved_pairs(1));
    if (std::abs(g2.value(eq).scalar_value()) > 1e-15)
      fail.set("byol equal-vector fixture is nonzero");
    (void)node;

    Tensor opp = Tensor::zeros({2, 3});
    opp.mat() << 1, 0, 0, -1, 0, 0;  // positives are opposite unit vectors
    Graph g3;
    auto far = loss::byol_id_loss(g3, g3.leaf(opp), g3.leaf(opp),
                                  interleaved_pairs(1), 1e-6);
    if (std::abs(g3.value(far).scalar_value() - (1.0 - 1e-6) * 4.0) > 1e-12)
      fail.set("byol opposite-vector fixture: got " +
               std::to_string(g3.value(far).scalar_value()));
  }
  {
    // stop-gradient contract: target-branch gradient is exactly zero
    Graph g;
    Tensor zo = random_tensor({4, 6}, rng);
    zo.requires_grad = true;
    Tensor zt = random_tensor({4, 6}, rng);
    zt.requires_grad = true;
    NodeId no = g.leaf(zo, "online");
    NodeId nt = g.leaf(zt, "target");
    NodeId l = loss::byol_id_loss(g, no, nt, interleaved_pairs(2));
    g.backward(l);
    if (g.grad(nt).data.abs().maxCoeff() != 0.0)
      fail.set("byol target branch received gradient");
    if (g.grad(no).data.abs().maxCoeff() == 0.0)
      fail.set("byol online branch received no gradient");
  }

  // ReLIC-style degenerate forms
  {
    const int B = 5;
    Tensor za = random_tensor({B, 8}, rng), zb = random_tensor({B, 8}, rng);
    Tensor ta = random_tensor({B, 8}, rng), tb = random_tensor({B, 8}, rng);
    Graph g;
    auto r0 = loss::relic_id_loss(g, g.leaf(za), g.leaf(zb), g.leaf(ta),
                                  g.leaf(tb), 0.5, 0.0);
    if (g.value(r0.node).scalar_value() != r0.nt_value)
      fail.set("relic alpha=0 does not reduce to its NT-Xent term exactly");

    // identical contexts: both views and both networks agree
    Graph g2;
    auto rid = loss::relic_id_loss(g2, g2.leaf(za), g2.leaf(za), g2.leaf(za),
                                   g2.leaf(za), 0.5, 2.0);
    if (rid.kl_value != 0.0)
      fail.set("relic identical contexts: KL term is " +
               std::to_string(rid.kl_value));
    if (g2.value(rid.node).scalar_value() != rid.nt_value)
      fail.set("relic identical contexts does not reduce to NT-Xent");

    // nondecreasing in alpha
    double prev = -1e300;
    for (double alpha : {0.0, 0.25, 1.0, 3.0}) {
      Graph ga;
      auto r = loss::relic_id_loss(ga, ga.leaf(za), ga.leaf(zb), ga.leaf(ta),
                                   ga.leaf(tb), 0.5, alpha);
      const double v = ga.value(r.node).scalar_value();
      if (v < prev - 1e-12)
        fail.set("relic loss decreased when alpha grew");
      prev = v;
    }
  }

  res.passed = !fail.failed;
  res.detail = fail.failed ? fail.what
                           : "ntxent/byol/relic degenerate forms recovered exactly";
  return res;
}

SuiteResult run_gradients(std::uint64_t seed) {
  SuiteResult res{"gradients", true, ""};
  Failure fail;
  Rng rng(derive_seed(seed, 0x9d));
  double worst = 0.0;

  auto expect_ok = [&](const char* name, const FdReport& rep) {
    worst = std::max(worst, rep.max_rel_err);
    if (!rep.ok())
      fail.set(std::string(name) + ": rel err " + fmt_sci(rep.max_rel_err) +
               " (analytic " + std::to_string(rep.worst_analytic) +
               ", numeric " + std::to_string(rep.worst_numeric) + ")");
  };

  const int B = 5;  // 10 views in the micro-batch
  const auto pairs = interleaved_pairs(B);

  {
    Tensor z = random_tensor({2 * B, 8}, rng);
    expect_ok("ntxent", finite_diff_check(
                            [&](Graph& g, const std::vector<NodeId>& in) {
                              return loss::ntxent_id_loss(g, in[0], pairs, 0.5).node;
                            },
                            {z}, 1e-6, 100, seed));
  }
  {
    Tensor logits = random_tensor({B, 6 * 4}, rng);
    std::vector<std::array<int, 6>> bins(B);
    std::vector<bool> mask(B, true);
    mask[1] = false;
    for (auto& bb : bins)
      for (auto& b : bb) b = static_cast<int>(rng.uniform_index(4));
    expect_ok("manip_ce", finite_diff_check(
                              [&](Graph& g, const std::vector<NodeId>& in) {
                                return loss::manip_ce_loss(g, in[0], bins, mask, 4).node;
                              },
                              {logits}, 1e-6, 100, seed));
  }
  {
    Tensor out = random_tensor({B, 6}, rng);
    std::vector<act::ActionVec> targets(B);
    std::vector<bool> mask(B, true);
    for (auto& t : targets)
      for (int k = 0; k < 6; ++k) t[k] = rng.uniform(-1, 1);
    expect_ok("manip_l2", finite_diff_check(
                              [&](Graph& g, const std::vector<NodeId>& in) {
                                return loss::manip_l2_loss(g, in[0], targets, mask).node;
                              },
                              {out}, 1e-6, 100, seed));
  }
  {
    Tensor zo = random_tensor({2 * B, 8}, rng);
    Tensor zt = random_tensor({2 * B, 8}, rng);
    // target branch is constant under stopgrad; check the online side
    expect_ok("byol_mse", finite_diff_check(
                              [&](Graph& g, const std::vector<NodeId>& in) {
                                Tensor t = zt;
                                return loss::byol_id_loss(g, in[0], g.leaf(t), pairs);
                              },
                              {zo}, 1e-6, 100, seed));
  }
  {
    Tensor za = random_tensor({B, 8}, rng), zb = random_tensor({B, 8}, rng);
    Tensor ta = random_tensor({B, 8}, rng), tb = random_tensor({B, 8}, rng);
    expect_ok("relic", finite_diff_check(
                           [&](Graph& g, const std::vector<NodeId>& in) {
                             Tensor a = ta, b = tb;
                             return loss::relic_id_loss(g, in[0], in[1], g.leaf(a),
                                                        g.leaf(b), 0.5, 0.7)
                                 .node;
                           },
                           {za, zb}, 1e-6, 100, seed));
  }

  // encoders on a 10-image micro-batch, parameter-level probes
  for (const char* kind : {"mlp", "smallconv"}) {
    model::EncoderCfg enc;
    enc.kind = kind;
    enc.resolution = 8;
    enc.feature_dim = 8;
    enc.widths = std::string(kind) == "mlp" ? std::vector<int>{12}
                                            : std::vector<int>{4, 6};
    model::ParamStore base;
    model::init_encoder(base, enc, derive_seed(seed, 0xe0));
    Tensor images = random_tensor({2 * B, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor weights = random_tensor({2 * B, 8}, rng);

    auto eval = [&](model::ParamStore& ps,
                    std::unordered_map<std::string, Tensor>* grads) {
      Graph g;
      NodeId x = g.leaf(images);
      NodeId h = model::encode(g, ps, x, enc, model::Mode::train);
      NodeId l = grad::mean(g, grad::mul(g, h, g.leaf(weights)));
      if (grads) {
        g.backward(l);
        *grads = g.named_grads();
      }
      return g.value(l).scalar_value();
    };
    expect_ok(kind, finite_diff_check_params(eval, base, base.learnable_names(),
                                             1e-6, 6, seed));
  }

  res.passed = !fail.failed;
  res.detail = fail.failed
                   ? fail.what
                   : "all losses and both encoders match finite differences, worst rel err " +
                         fmt_sci(worst);
  return res;
}

SuiteResult run_affine(long trials, std::uint64_t seed) {
  SuiteResult res{"affine", true, ""};
  Failure fail;
  double max_err = 0.0;
  const Eigen::Vector2d corners[4] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

  for (long t = 0; t < trials && !fail.failed; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), 0xaf));
    const int W = 8 + static_cast<int>(rng.uniform_index(120));
    const int H = 8 + static_cast<int>(rng.uniform_index(120));
    const auto rx = random_crop_record(W, H, rng);
    const auto ry = random_crop_record(W, H, rng);
    const auto rz = random_crop_record(W, H, rng);
    const act::AffineMat mx = act::crop_matrix(rx, W, H);
    const act::AffineMat my = act::crop_matrix(ry, W, H);
    const act::AffineMat mz = act::crop_matrix(rz, W, H);

    // corner-point oracle: composed matrix vs stepwise application
    const act::AffineMat direct = act::compose_top_rows(act::ego_action(mx, my));
    for (const auto& c : corners) {
      const Eigen::Vector2d one = act::apply_affine(direct, c);
      const Eigen::Vector2d two =
          act::apply_affine(my, act::apply_affine(mx.inverse(), c));
      const double err = (one - two).norm();
      max_err = std::max(max_err, err);
      if (err >= 1e-9)
        fail.set("corner oracle: error " + fmt_sci(err) + " at trial " +
                 std::to_string(t));
    }

    // composition associativity through an intermediate view
    const act::AffineMat exz = act::compose_top_rows(act::ego_action(mx, mz));
    const act::AffineMat exy = act::compose_top_rows(act::ego_action(mx, my));
    const act::AffineMat eyz = act::compose_top_rows(act::ego_action(my, mz));
    for (const auto& c : corners) {
      const Eigen::Vector2d one = act::apply_affine(exz, c);
      const Eigen::Vector2d two = act::apply_affine(eyz, act::apply_affine(exy, c));
      const double err = (one - two).norm();
      max_err = std::max(max_err, err);
      if (err >= 1e-9)
        fail.set("associativity: error " + fmt_sci(err) + " at trial " +
                 std::to_string(t));
    }

    // self action is the identity
    const act::ActionVec self = act::ego_action(mx, mx);
    act::ActionVec ident;
    ident << 1, 0, 0, 0, 1, 0;
    if ((self - ident).cwiseAbs().maxCoeff() >= 1e-9)
      fail.set("ego_action(M, M) deviates from identity at trial " +
               std::to_string(t));
  }

  // binning vs an independent edge-counting quantizer, plus monotonicity
  {
    const auto spec = act::BinningSpec::defaults();
    Rng rng(derive_seed(seed, 0xb1));
    auto oracle = [&spec](double v, int k) {
      int count = 0;  // number of interior edges at or below v
      for (int j = 1; j < spec.K; ++j) {
        const double edge = spec.manip_min[k] +
                            (spec.manip_max[k] - spec.manip_min[k]) *
                                static_cast<double>(j) / spec.K;
        if (v >= edge) ++count;
      }
      if (v >= spec.manip_max[k]) count = spec.K - 1;
      if (v < spec.manip_min[k]) count = 0;
      return count;
    };
    for (int i = 0; i < 10000 && !fail.failed; ++i) {
      act::ActionVec a;
      for (int k = 0; k < 6; ++k)
        a[k] = rng.uniform(spec.manip_min[k] - 0.5, spec.manip_max[k] + 0.5);
      const auto bins = act::bin_action(a, spec);
      for (int k = 0; k < 6; ++k)
        if (bins[static_cast<std::size_t>(k)] != oracle(a[k], k))
          fail.set("bin_action disagrees with quantizer oracle at value " +
                   std::to_string(a[k]) + " (component " + std::to_string(k) +
                   "): " + std::to_string(bins[static_cast<std::size_t>(k)]) +
                   " vs " + std::to_string(oracle(a[k], k)));
    }
    // monotone nondecreasing over a sorted sweep
    int prev = 0;
    for (int i = 0; i <= 1000; ++i) {
      act::ActionVec a = act::ActionVec::Zero();
      a[0] = -3.0 + 6.0 * i / 1000.0;
      const int b = act::bin_action(a, spec)[0];
      if (b < prev) fail.set("bin_action not monotone");
      prev = b;
    }
  }

  // egocentric and allocentric genuinely disagree: same relative geometry,
  // different absolute crops
  {
    img::TransformRecord a1, a2, b1, b2;
    a1.crop_left = 0; a1.crop_top = 0; a1.crop_width = 16; a1.crop_height = 16;
    a2.crop_left = 0; a2.crop_top = 0; a2.crop_width = 32; a2.crop_height = 32;
    b1.crop_left = 4; b1.crop_top = 4; b1.crop_width = 8; b1.crop_height = 8;
    b2.crop_left = 8; b2.crop_top = 8; b2.crop_width = 16; b2.crop_height = 16;
    const int W = 32, H = 32;
    const act::ActionVec ego_a =
        act::ego_action(act::crop_matrix(a1, W, H), act::crop_matrix(a2, W, H));
    const act::ActionVec ego_b =
        act::ego_action(act::crop_matrix(b1, W, H), act::crop_matrix(b2, W, H));
    const act::ActionVec allo_a = act::allocentric_action(a1, a2, W, H);
    const act::ActionVec allo_b = act::allocentric_action(b1, b2, W, H);
    if ((ego_a - ego_b).cwiseAbs().maxCoeff() > 1e-12)
      fail.set("egocentric actions differ on the matched-geometry fixture");
    if ((allo_a - allo_b).cwiseAbs().maxCoeff() < 1e-6)
      fail.set("allocentric actions coincide on the matched-geometry fixture");
  }

  res.passed = !fail.failed;
  res.detail = fail.failed ? fail.what
                           : "corner oracle max err " + fmt_sci(max_err) + " over " +
                                 std::to_string(trials) +
                                 " trials; quantizer oracle exact on 10000 values";
  return res;
}

SuiteResult run_extras(long trials, std::uint64_t seed) {
  SuiteResult res{"extras", true, ""};
  Failure fail;

  // pixel range over random pipelines
  {
    img::AugmentPolicy policy;
    policy.target = 16;
    policy.blur_enabled = true;
    policy.solarize_enabled = true;
    long checked = 0;
    for (long t = 0; t < trials && !fail.failed; ++t) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), 0x1a));
      img::Image im(20, 24);
      for (long i = 0; i < im.numel(); ++i) im.data[i] = rng.uniform();
      Rng arng(derive_seed(seed, static_cast<std::uint64_t>(t), 0x1b));
      const auto view = img::augment_view(im, policy, arng, 0);
      ++checked;
      if (view.image.data.minCoeff() < 0.0 || view.image.data.maxCoeff() > 1.0)
        fail.set("pixel left [0,1] at trial " + std::to_string(t));
    }
    (void)checked;
  }

  // identity pipeline is a fixed point at native resolution
  {
    Rng rng(derive_seed(seed, 0x2a));
    img::Image im(24, 24);
    for (long i = 0; i < im.numel(); ++i) im.data[i] = rng.uniform();
    Rng arng(derive_seed(seed, 0x2b));
    const auto view =
        img::augment_view(im, img::AugmentPolicy::identity(24), arng, 0);
    const double dev = (view.image.data - im.data).abs().maxCoeff();
    if (dev >= 1e-9)
      fail.set("identity pipeline deviates by " + fmt_sci(dev));
  }

  // hue round trip: +0.5 twice restores the pixel
  {
    Rng rng(derive_seed(seed, 0x3a));
    img::Image im(10, 10);
    for (long i = 0; i < im.numel(); ++i) im.data[i] = rng.uniform();
    const auto once = img::adjust_hue(im, 0.5);
    const auto twice = img::adjust_hue(once, 0.5);
    const double dev = (twice.data - im.data).abs().maxCoeff();
    if (dev >= 1e-6) fail.set("hue round trip deviates by " + fmt_sci(dev));
  }

  // schedule continuity and endpoints
  {
    opt::OptimCfg cfg;
    cfg.base_lr = 1.0;
    cfg.batch_size = 64;
    cfg.warmup_epochs = 10;
    cfg.total_epochs = 20;
    cfg.steps_per_epoch = 37;
    const double peak = cfg.peak_lr();
    if (opt::lr_at(0, cfg) != 0.0) fail.set("lr_at(0) != 0");
    if (std::abs(opt::lr_at(cfg.warmup_steps(), cfg) - peak) > 1e-15)
      fail.set("lr at end of warmup misses the peak");
    if (opt::lr_at(cfg.total_steps(), cfg) > 1e-6 * peak)
      fail.set("cosine endpoint above 1e-6 * peak");
    for (long s = 0; s + 1 <= cfg.total_steps() && !fail.failed; ++s) {
      const double d = std::abs(opt::lr_at(s + 1, cfg) - opt::lr_at(s, cfg));
      const double limit = peak / static_cast<double>(cfg.warmup_steps()) + 1e-12;
      if (s < cfg.warmup_steps() && d > limit)
        fail.set("warmup increment exceeds peak/warmup_steps");
    }
  }

  // two steps on a quadratic bowl strictly descend (plain SGD, wd=0)
  {
    model::ParamStore ps;
    Tensor w = Tensor::zeros({4});
    w.data << 1.0, -2.0, 0.5, 3.0;
    ps.add("w", w);
    opt::OptimCfg cfg;
    cfg.lars_enabled = false;
    cfg.weight_decay = 0.0;
    cfg.momentum = 0.9;
    auto loss_of = [&] { return 0.5 * ps.tensor("w").data.square().sum(); };
    double prev = loss_of();
    for (int s = 0; s < 2; ++s) {
      std::unordered_map<std::string, Tensor> grads;
      grads["w"] = Tensor({4}, ps.tensor("w").data);
      opt::lars_sgd_step(ps, grads, 0.05, cfg);
      const double now = loss_of();
      if (now >= prev) fail.set("quadratic bowl did not descend");
      prev = now;
    }
  }

  // excluded parameters ignore the trust coefficient entirely
  {
    auto run_once = [&](double trust) {
      model::ParamStore ps;
      Tensor w = Tensor::zeros({3});
      w.data << 0.3, -0.4, 0.9;
      ps.add("b", w, model::ParamFlags{true, true, true});
      opt::OptimCfg cfg;
      cfg.lars_enabled = true;
      cfg.lars_trust_coeff = trust;
      std::unordered_map<std::string, Tensor> grads;
      Tensor gt = Tensor::zeros({3});
      gt.data << 0.1, 0.2, -0.3;
      grads["b"] = gt;
      opt::lars_sgd_step(ps, grads, 0.1, cfg);
      return ps.tensor("b").data;
    };
    const Arr a = run_once(0.001);
    const Arr b = run_once(123.0);
    if ((a - b).abs().maxCoeff() != 0.0)
      fail.set("trust coefficient leaked into an excluded parameter");
  }

  // dataset generation and batching are deterministic
  {
    const auto d1 = data::gen_synthetic(12, 3, 16, 99);
    const auto d2 = data::gen_synthetic(12, 3, 16, 99);
    for (int i = 0; i < 12 && !fail.failed; ++i)
      if ((d1.images[static_cast<std::size_t>(i)].data !=
           d2.images[static_cast<std::size_t>(i)].data)
              .any())
        fail.set("synthetic dataset not reproducible");
    img::AugmentPolicy policy;
    policy.target = 16;
    const auto b1 = data::make_batch(d1, 4, policy, act::BinningSpec::defaults(), 5);
    const auto b2 = data::make_batch(d1, 4, policy, act::BinningSpec::defaults(), 5);
    for (std::size_t v = 0; v < b1.views.size() && !fail.failed; ++v)
      if ((b1.views[v].image.data != b2.views[v].image.data).any())
        fail.set("batches with the same seed differ");
  }

  res.passed = !fail.failed;
  res.detail = fail.failed ? fail.what
                           : "imaging, schedule, optimizer and dataset invariants hold";
  return res;
}

std::vector<SuiteResult> run_suites(const std::string& which, long trials,
                                    std::uint64_t seed) {
  std::vector<SuiteResult> out;
  const bool all = which == "all";
  if (all || which == "decomposition") out.push_back(run_decomposition(trials, seed));
  if (all || which == "bound") out.push_back(run_bound(trials, seed));
  if (all || which == "recovery") out.push_back(run_recovery(seed));
  if (all || which == "gradients") out.push_back(run_gradients(seed));
  if (all || which == "affine") out.push_back(run_affine(trials, seed));
  if (all) out.push_back(run_extras(std::min<long>(trials, 1000), seed));
  if (out.empty())
    throw std::invalid_argument("unknown verify suite '" + which + "'");
  return out;
}

}  // namespace stec::verify
