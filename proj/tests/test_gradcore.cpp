#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stec/gradcheck.hpp"
#include "stec/ops.hpp"
#include "stec/rng.hpp"

#include <cmath>

using namespace stec;
using grad::Arr;
using grad::Graph;
using grad::NodeId;
using grad::Tensor;

namespace {

Tensor random_tensor(grad::Shape shape, std::uint64_t seed, double lo = -2.0,
                     double hi = 2.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

// keeps values away from the ReLU kink so finite differences stay valid
Tensor random_tensor_nonzero(grad::Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed);
  for (Eigen::Index i = 0; i < t.numel(); ++i)
    if (std::abs(t.data[i]) < 5e-3) t.data[i] = t.data[i] < 0 ? -5e-3 : 5e-3;
  return t;
}

}  // namespace

TEST_CASE("square function value and gradient") {
  Graph g;
  NodeId x = g.leaf(Tensor::scalar(3.0, true), "x");
  NodeId y = grad::mul(g, x, x);
  auto res = grad::forward_backward(g, y);
  CHECK(res.loss == doctest::Approx(9.0));
  CHECK(res.grads.at("x").data[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax of equal logits is uniform with zero sum-gradient") {
  Graph g;
  NodeId x = g.leaf(Tensor::full({1, 4}, 1.7, true), "x");
  NodeId s = grad::softmax_rows(g, x);
  NodeId total = grad::sum(g, s);
  g.backward(total);
  for (int i = 0; i < 4; ++i)
    CHECK(g.value(s).data[i] == doctest::Approx(0.25).epsilon(1e-12));
  for (int i = 0; i < 4; ++i)
    CHECK(g.grad(x).data[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross-entropy gradient equals softmax minus onehot") {
  Rng rng(5);
  Tensor logits = random_tensor({3, 5}, 11);
  const std::vector<int> labels = {1, 4, 0};

  Graph g;
  NodeId lx = g.leaf([&] {
    Tensor t = logits;
    t.requires_grad = true;
    return t;
  }(), "logits");
  // scale the mean back to a sum so the identity holds row by row
  NodeId loss =
      grad::scale(g, grad::softmax_xent_rows(g, lx, labels, Arr::Ones(3)), 3.0);
  g.backward(loss);

  for (int i = 0; i < 3; ++i) {
    Eigen::RowVectorXd row = logits.mat().row(i);
    Eigen::RowVectorXd sm = (row.array() - row.maxCoeff()).exp().matrix();
    sm /= sm.sum();
    for (int j = 0; j < 5; ++j) {
      const double expected = sm[j] - (labels[i] == j ? 1.0 : 0.0);
      CHECK(g.grad(lx).mat()(i, j) == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  // and against central finite differences, step 1e-6
  auto rep = verify::finite_diff_check(
      [&](Graph& gg, const std::vector<NodeId>& leaves) {
        return grad::softmax_xent_rows(gg, leaves[0], labels, Arr::Ones(3));
      },
      {logits});
  CHECK(rep.ok());
}

TEST_CASE("every primitive op matches central finite differences") {
  const std::vector<int> perm = {3, 1, 0, 2};
  struct Case {
    const char* name;
    verify::BuildFn build;
    std::vector<Tensor> inputs;
  };
  std::vector<Case> cases;

  cases.push_back({"add+mul+scale", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::scale(g, grad::mul(g, grad::add(g, in[0], in[1]), in[0]), 0.7));
                   },
                   {random_tensor({4, 3}, 1), random_tensor({4, 3}, 2)}});
  cases.push_back({"sub+exp", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::exp(g, grad::sub(g, in[0], in[1])));
                   },
                   {random_tensor({3, 3}, 3), random_tensor({3, 3}, 4)}});
  cases.push_back({"log", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::log(g, in[0]));
                   },
                   {random_tensor({4, 2}, 5, 0.2, 3.0)}});
  cases.push_back({"relu", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::relu(g, in[0]));
                   },
                   {random_tensor_nonzero({5, 4}, 6)}});
  cases.push_back({"matmul+bias", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::add_bias(g, grad::matmul(g, in[0], in[1]), in[2]));
                   },
                   {random_tensor({3, 4}, 7), random_tensor({4, 2}, 8),
                    random_tensor({2}, 9)}});
  cases.push_back({"matmul_nt", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::mean(g, grad::matmul_nt(g, in[0], in[1]));
                   },
                   {random_tensor({3, 4}, 10), random_tensor({5, 4}, 11)}});
  cases.push_back({"l2_normalize_rows", [](Graph& g, const std::vector<NodeId>& in) {
                     NodeId n = grad::l2_normalize_rows(g, in[0]);
                     return grad::sum(g, grad::mul(g, n, n));
                   },
                   {random_tensor({4, 3}, 12)}});
  cases.push_back({"rowsum+weighted_mean", [](Graph& g, const std::vector<NodeId>& in) {
                     Arr w(4);
                     w << 1.0, 0.0, 2.0, 0.5;
                     return grad::weighted_mean(g, grad::rowsum(g, in[0]), w);
                   },
                   {random_tensor({4, 5}, 13)}});
  cases.push_back({"softmax_rows", [](Graph& g, const std::vector<NodeId>& in) {
                     NodeId s = grad::softmax_rows(g, in[0]);
                     return grad::sum(g, grad::mul(g, s, in[1]));
                   },
                   {random_tensor({3, 4}, 14), random_tensor({3, 4}, 15)}});
  cases.push_back({"log_softmax_rows", [](Graph& g, const std::vector<NodeId>& in) {
                     NodeId s = grad::log_softmax_rows(g, in[0]);
                     return grad::sum(g, grad::mul(g, s, in[1]));
                   },
                   {random_tensor({3, 4}, 16), random_tensor({3, 4}, 17)}});
  cases.push_back({"concat+permute+mask_diag",
                   [&perm](Graph& g, const std::vector<NodeId>& in) {
                     NodeId c = grad::concat_cols(g, in[0], in[1]);
                     NodeId p = grad::permute_rows(g, c, perm);
                     NodeId m = grad::mask_diagonal(g, grad::matmul_nt(g, p, p), 0.5);
                     return grad::mean(g, m);
                   },
                   {random_tensor({4, 2}, 18), random_tensor({4, 3}, 19)}});
  cases.push_back({"reshape+nchw_rows", [](Graph& g, const std::vector<NodeId>& in) {
                     NodeId r = grad::rows_from_nchw(g, in[0]);
                     NodeId b = grad::nchw_from_rows(g, r, 2, 3, 4, 4);
                     return grad::sum(g, grad::mul(g, b, b));
                   },
                   {random_tensor({2, 3, 4, 4}, 20)}});
  cases.push_back({"conv2d", [](Graph& g, const std::vector<NodeId>& in) {
                     NodeId y = grad::conv2d(g, in[0], in[1], in[2], 2, 1);
                     return grad::sum(g, grad::mul(g, y, y));
                   },
                   {random_tensor({2, 3, 6, 6}, 21), random_tensor({4, 3, 3, 3}, 22),
                    random_tensor({4}, 23)}});
  cases.push_back({"global_avg_pool", [](Graph& g, const std::vector<NodeId>& in) {
                     return grad::sum(g, grad::global_avg_pool(g, in[0]));
                   },
                   {random_tensor({2, 3, 4, 4}, 24)}});
  cases.push_back({"batch_norm train", [](Graph& g, const std::vector<NodeId>& in) {
                     Tensor rm = Tensor::zeros({3});
                     Tensor rv = Tensor::full({3}, 1.0);
                     grad::BatchNormState st{&rm, &rv};
                     NodeId y = grad::batch_norm(g, in[0], in[1], in[2], st, true);
                     return grad::sum(g, grad::mul(g, y, y));
                   },
                   {random_tensor({6, 3}, 25), random_tensor({3}, 26, 0.5, 1.5),
                    random_tensor({3}, 27)}});
  cases.push_back({"batch_norm eval", [](Graph& g, const std::vector<NodeId>& in) {
                     Tensor rm = Tensor::full({3}, 0.2);
                     Tensor rv = Tensor::full({3}, 0.8);
                     grad::BatchNormState st{&rm, &rv};
                     NodeId y = grad::batch_norm(g, in[0], in[1], in[2], st, false);
                     return grad::sum(g, grad::mul(g, y, y));
                   },
                   {random_tensor({4, 3}, 28), random_tensor({3}, 29, 0.5, 1.5),
                    random_tensor({3}, 30)}});
  for (auto& c : cases) {
    INFO(c.name, " max_rel_err=");
    auto rep = verify::finite_diff_check(c.build, c.inputs, 1e-6, 100);
    INFO(rep.max_rel_err);
    CHECK(rep.ok());
    CHECK(rep.probes >= 8);
  }
}

TEST_CASE("stopgrad blocks the reverse pass exactly") {
  Graph g;
  NodeId x = g.leaf(Tensor::full({3, 3}, 0.5, true), "x");
  NodeId s = grad::stopgrad(g, x);
  NodeId loss = grad::sum(g, grad::mul(g, s, grad::add(g, x, x)));
  g.backward(loss);
  // d/dx of sum(stop(x) * 2x) keeps only the pass-through branch: 2*stop(x)
  for (Eigen::Index i = 0; i < 9; ++i)
    CHECK(g.grad(x).data[i] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
  Tensor x = random_tensor({4, 4}, 40);
  x.requires_grad = true;
  Graph g;
  NodeId lx = g.leaf(x, "x");
  NodeId l1 = grad::mean(g, grad::mul(g, lx, lx));
  NodeId l2 = grad::sum(g, grad::exp(g, grad::scale(g, lx, 0.3)));
  NodeId l12 = grad::add(g, l1, l2);

  g.backward(l1);
  Arr g1 = g.grad(lx).data;
  g.backward(l2);
  Arr g2 = g.grad(lx).data;
  g.backward(l12);
  Arr g12 = g.grad(lx).data;
  for (Eigen::Index i = 0; i < g12.size(); ++i)
    CHECK(std::abs(g12[i] - (g1[i] + g2[i])) < 1e-12);
}

TEST_CASE("forward_backward is bit-identical across reruns") {
  auto run = [] {
    Graph g;
    NodeId x = g.leaf(random_tensor({8, 6}, 50, -1, 1), "x");
    NodeId w = g.leaf([] {
      Tensor t = random_tensor({6, 4}, 51);
      t.requires_grad = true;
      return t;
    }(), "w");
    NodeId y = grad::relu(g, grad::matmul(g, x, w));
    NodeId loss = grad::mean(g, grad::mul(g, y, y));
    auto res = grad::forward_backward(g, loss);
    return std::make_pair(res.loss, res.grads.at("w").data);
  };
  auto [la, ga] = run();
  auto [lb, gb] = run();
  CHECK(std::memcmp(&la, &lb, sizeof la) == 0);
  REQUIRE(ga.size() == gb.size());
  CHECK(std::memcmp(ga.data(), gb.data(), sizeof(double) * ga.size()) == 0);
}

TEST_CASE("shape errors are rejected with the offending node id") {
  Graph g;
  NodeId a = g.leaf(Tensor::zeros({2, 3}));
  NodeId b = g.leaf(Tensor::zeros({4, 2}));
  CHECK_THROWS_AS(grad::matmul(g, a, b), grad::GradError);
  CHECK_THROWS_AS(grad::add(g, a, b), grad::GradError);
  try {
    grad::matmul(g, a, b);
  } catch (const grad::GradError& e) {
    CHECK(e.node == b);
  }
}

TEST_CASE("non-scalar loss is rejected") {
  Graph g;
  NodeId a = g.leaf(Tensor::zeros({2, 2}, true));
  NodeId y = grad::mul(g, a, a);
  CHECK_THROWS_AS(g.backward(y), grad::GradError);
}

TEST_CASE("batch norm handles fixture cases") {
  SUBCASE("zero-mean unit-variance input with identity affine is preserved") {
    // columns with exact zero mean and unit (population) variance
    Tensor x = Tensor::zeros({4, 2});
    x.mat() << 1, 2, -1, -2, 1, 2, -1, -2;
    Graph g;
    NodeId lx = g.leaf(x);
    NodeId gamma = g.leaf(Tensor::full({2}, 1.0));
    NodeId beta = g.leaf(Tensor::zeros({2}));
    Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
    grad::BatchNormState st{&rm, &rv};
    // variance of column 0 is 1, column 1 is 4 -> normalize col1 by 2
    NodeId y = grad::batch_norm(g, lx, gamma, beta, st, true);
    CHECK(g.value(y).mat()(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(g.value(y).mat()(0, 1) == doctest::Approx(1.0).epsilon(1e-5));
  }

  SUBCASE("constant column collapses to beta") {
    Tensor x = Tensor::full({5, 3}, 2.5);
    Graph g;
    NodeId lx = g.leaf(x);
    NodeId gamma = g.leaf(Tensor::full({3}, 1.3));
    NodeId beta = g.leaf(Tensor::full({3}, -0.7));
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
    grad::BatchNormState st{&rm, &rv};
    NodeId y = grad::batch_norm(g, lx, gamma, beta, st, true);
    for (Eigen::Index i = 0; i < g.value(y).numel(); ++i)
      CHECK(g.value(y).data[i] == doctest::Approx(-0.7).epsilon(1e-9));
  }

  SUBCASE("train and eval modes differ on a shifted batch") {
    Tensor x = random_tensor({6, 3}, 60);
    x.data += 3.0;  // shift away from the frozen running mean
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
    auto run_mode = [&](bool train) {
      Graph g;
      NodeId lx = g.leaf(x);
      NodeId gamma = g.leaf(Tensor::full({3}, 1.0));
      NodeId beta = g.leaf(Tensor::zeros({3}));
      Tensor rm_copy = rm, rv_copy = rv;
      grad::BatchNormState st{&rm_copy, &rv_copy};
      NodeId y = grad::batch_norm(g, lx, gamma, beta, st, train);
      return g.value(y).data.matrix().eval();
    };
    const auto train_out = run_mode(true);
    const auto eval_out = run_mode(false);
    CHECK((train_out - eval_out).cwiseAbs().maxCoeff() > 0.5);
  }

  SUBCASE("B=1 in train mode is rejected") {
    Graph g;
    NodeId lx = g.leaf(Tensor::zeros({1, 3}));
    NodeId gamma = g.leaf(Tensor::full({3}, 1.0));
    NodeId beta = g.leaf(Tensor::zeros({3}));
    Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
    grad::BatchNormState st{&rm, &rv};
    CHECK_THROWS_AS(grad::batch_norm(g, lx, gamma, beta, st, true),
                    grad::GradError);
  }

  SUBCASE("train mode updates running stats with momentum 0.1") {
    Tensor x = Tensor::zeros({2, 1});
    x.mat() << 1.0, 3.0;  // mean 2, unbiased var 2
    Graph g;
    NodeId lx = g.leaf(x);
    NodeId gamma = g.leaf(Tensor::full({1}, 1.0));
    NodeId beta = g.leaf(Tensor::zeros({1}));
    Tensor rm = Tensor::zeros({1}), rv = Tensor::full({1}, 1.0);
    grad::BatchNormState st{&rm, &rv};
    grad::batch_norm(g, lx, gamma, beta, st, true);
    CHECK(rm.data[0] == doctest::Approx(0.2));
    CHECK(rv.data[0] == doctest::Approx(0.9 + 0.1 * 2.0));
  }
}
