#include "stec/ops.hpp"

#include <cmath>

namespace stec::grad {

namespace {

void require(bool ok, const std::string& msg, NodeId id) {
  if (!ok) throw GradError(msg, id);
}

void require_rank2(const Graph& g, NodeId id, const char* op) {
  require(g.value(id).rank() == 2,
          std::string(op) + ": expected rank-2 tensor, got " +
              shape_str(g.value(id).shape),
          id);
}

// rowwise softmax with max-shift; writes into out
void softmax_into(ConstMatMap x, MatRM& out) {
  out.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Real mx = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
}

}  // namespace

NodeId stopgrad(Graph& g, NodeId x) {
  Tensor v = g.value(x);
  v.requires_grad = false;
  // no parents: the chain is cut on purpose
  return g.push(std::move(v), {}, nullptr);
}

NodeId reshape(Graph& g, NodeId x, Shape shape) {
  const Tensor& in = g.value(x);
  require(shape_numel(shape) == in.numel(),
          "reshape: element count mismatch " + shape_str(in.shape) + " -> " +
              shape_str(shape),
          x);
  Tensor v(std::move(shape), in.data, in.requires_grad);
  return g.push(std::move(v), {x}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data;
  });
}

NodeId concat_cols(Graph& g, NodeId a, NodeId b) {
  require_rank2(g, a, "concat_cols");
  require_rank2(g, b, "concat_cols");
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require(ta.dim(0) == tb.dim(0), "concat_cols: row counts differ", b);
  const Eigen::Index B = ta.dim(0), D1 = ta.dim(1), D2 = tb.dim(1);
  Tensor v = Tensor::zeros({B, D1 + D2});
  v.mat().leftCols(D1) = ta.mat();
  v.mat().rightCols(D2) = tb.mat();
  return g.push(std::move(v), {a, b}, [B, D1, D2](Graph& gg, NodeId self) {
    ConstMatMap dy(gg.grad(self).data.data(), B, D1 + D2);
    MatMap(gg.grad_data(gg.parents(self)[0]).data(), B, D1) += dy.leftCols(D1);
    MatMap(gg.grad_data(gg.parents(self)[1]).data(), B, D2) += dy.rightCols(D2);
  });
}

NodeId permute_rows(Graph& g, NodeId x, const std::vector<int>& perm) {
  require_rank2(g, x, "permute_rows");
  const Tensor& in = g.value(x);
  const Eigen::Index Bin = in.dim(0), D = in.dim(1);
  const Eigen::Index Bout = static_cast<Eigen::Index>(perm.size());
  for (int p : perm)
    require(p >= 0 && p < Bin, "permute_rows: row index out of range", x);
  Tensor v = Tensor::zeros({Bout, D});
  for (Eigen::Index i = 0; i < Bout; ++i)
    v.mat().row(i) = in.mat().row(perm[static_cast<std::size_t>(i)]);
  return g.push(std::move(v), {x}, [perm, Bin, Bout, D](Graph& gg, NodeId self) {
    ConstMatMap dy(gg.grad(self).data.data(), Bout, D);
    MatMap dx(gg.grad_data(gg.parents(self)[0]).data(), Bin, D);
    for (Eigen::Index i = 0; i < Bout; ++i)
      dx.row(perm[static_cast<std::size_t>(i)]) += dy.row(i);
  });
}

NodeId rows_from_nchw(Graph& g, NodeId x) {
  const Tensor& in = g.value(x);
  require(in.rank() == 4, "rows_from_nchw: expected [B,C,H,W]", x);
  const Eigen::Index B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  Tensor v = Tensor::zeros({B * H * W, C});
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index c = 0; c < C; ++c)
      for (Eigen::Index h = 0; h < H; ++h)
        for (Eigen::Index w = 0; w < W; ++w)
          v.data[((b * H + h) * W + w) * C + c] =
              in.data[((b * C + c) * H + h) * W + w];
  return g.push(std::move(v), {x}, [B, C, H, W](Graph& gg, NodeId self) {
    const Arr& dy = gg.grad(self).data;
    Arr& dx = gg.grad_data(gg.parents(self)[0]);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index h = 0; h < H; ++h)
          for (Eigen::Index w = 0; w < W; ++w)
            dx[((b * C + c) * H + h) * W + w] +=
                dy[((b * H + h) * W + w) * C + c];
  });
}

NodeId nchw_from_rows(Graph& g, NodeId x, Eigen::Index B, Eigen::Index C,
                      Eigen::Index H, Eigen::Index W) {
  const Tensor& in = g.value(x);
  require(in.rank() == 2 && in.dim(0) == B * H * W && in.dim(1) == C,
          "nchw_from_rows: shape mismatch", x);
  Tensor v = Tensor::zeros({B, C, H, W});
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index c = 0; c < C; ++c)
      for (Eigen::Index h = 0; h < H; ++h)
        for (Eigen::Index w = 0; w < W; ++w)
          v.data[((b * C + c) * H + h) * W + w] =
              in.data[((b * H + h) * W + w) * C + c];
  return g.push(std::move(v), {x}, [B, C, H, W](Graph& gg, NodeId self) {
    const Arr& dy = gg.grad(self).data;
    Arr& dx = gg.grad_data(gg.parents(self)[0]);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index h = 0; h < H; ++h)
          for (Eigen::Index w = 0; w < W; ++w)
            dx[((b * H + h) * W + w) * C + c] +=
                dy[((b * C + c) * H + h) * W + w];
  });
}

NodeId mask_diagonal(Graph& g, NodeId x, Real value) {
  require_rank2(g, x, "mask_diagonal");
  const Tensor& in = g.value(x);
  require(in.dim(0) == in.dim(1), "mask_diagonal: matrix not square", x);
  const Eigen::Index N = in.dim(0);
  Tensor v = in;
  v.requires_grad = false;
  for (Eigen::Index i = 0; i < N; ++i) v.mat()(i, i) = value;
  return g.push(std::move(v), {x}, [N](Graph& gg, NodeId self) {
    Arr dy = gg.grad(self).data;
    MatMap dyi(dy.data(), N, N);
    for (Eigen::Index i = 0; i < N; ++i) dyi(i, i) = 0.0;
    gg.grad_data(gg.parents(self)[0]) += dy;
  });
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  require(same_shape(g.value(a), g.value(b)), "add: shape mismatch", b);
  Tensor v(g.value(a).shape, g.value(a).data + g.value(b).data);
  return g.push(std::move(v), {a, b}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data;
    gg.grad_data(gg.parents(self)[1]) += gg.grad(self).data;
  });
}

NodeId sub(Graph& g, NodeId a, NodeId b) {
  require(same_shape(g.value(a), g.value(b)), "sub: shape mismatch", b);
  Tensor v(g.value(a).shape, g.value(a).data - g.value(b).data);
  return g.push(std::move(v), {a, b}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data;
    gg.grad_data(gg.parents(self)[1]) -= gg.grad(self).data;
  });
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
  require(same_shape(g.value(a), g.value(b)), "mul: shape mismatch", b);
  Tensor v(g.value(a).shape, g.value(a).data * g.value(b).data);
  return g.push(std::move(v), {a, b}, [](Graph& gg, NodeId self) {
    const auto& ps = gg.parents(self);
    gg.grad_data(ps[0]) += gg.grad(self).data * gg.value(ps[1]).data;
    gg.grad_data(ps[1]) += gg.grad(self).data * gg.value(ps[0]).data;
  });
}

NodeId scale(Graph& g, NodeId a, Real c) {
  Tensor v(g.value(a).shape, g.value(a).data * c);
  return g.push(std::move(v), {a}, [c](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data * c;
  });
}

NodeId add_const(Graph& g, NodeId a, Real c) {
  Tensor v(g.value(a).shape, g.value(a).data + c);
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data;
  });
}

NodeId relu(Graph& g, NodeId a) {
  Tensor v(g.value(a).shape, g.value(a).data.max(0.0));
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    const NodeId p = gg.parents(self)[0];
    gg.grad_data(p) +=
        gg.grad(self).data * (gg.value(p).data > 0.0).cast<Real>();
  });
}

NodeId exp(Graph& g, NodeId a) {
  Tensor v(g.value(a).shape, g.value(a).data.exp());
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) +=
        gg.grad(self).data * gg.value(self).data;
  });
}

NodeId log(Graph& g, NodeId a) {
  Tensor v(g.value(a).shape, g.value(a).data.log());
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    const NodeId p = gg.parents(self)[0];
    gg.grad_data(p) += gg.grad(self).data / gg.value(p).data;
  });
}

NodeId matmul(Graph& g, NodeId a, NodeId b) {
  require_rank2(g, a, "matmul");
  require_rank2(g, b, "matmul");
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require(ta.dim(1) == tb.dim(0),
          "matmul: inner dimensions disagree " + shape_str(ta.shape) + " * " +
              shape_str(tb.shape),
          b);
  Tensor v = Tensor::zeros({ta.dim(0), tb.dim(1)});
  v.mat().noalias() = ta.mat() * tb.mat();
  return g.push(std::move(v), {a, b}, [](Graph& gg, NodeId self) {
    const auto& ps = gg.parents(self);
    const Tensor& A = gg.value(ps[0]);
    const Tensor& B = gg.value(ps[1]);
    const Tensor& dy = gg.grad(self);
    ConstMatMap dym(dy.data.data(), A.dim(0), B.dim(1));
    MatMap(gg.grad_data(ps[0]).data(), A.dim(0), A.dim(1)).noalias() +=
        dym * B.mat().transpose();
    MatMap(gg.grad_data(ps[1]).data(), B.dim(0), B.dim(1)).noalias() +=
        A.mat().transpose() * dym;
  });
}

NodeId matmul_nt(Graph& g, NodeId a, NodeId b) {
  require_rank2(g, a, "matmul_nt");
  require_rank2(g, b, "matmul_nt");
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require(ta.dim(1) == tb.dim(1),
          "matmul_nt: column dimensions disagree " + shape_str(ta.shape) +
              " * " + shape_str(tb.shape) + "^T",
          b);
  Tensor v = Tensor::zeros({ta.dim(0), tb.dim(0)});
  v.mat().noalias() = ta.mat() * tb.mat().transpose();
  return g.push(std::move(v), {a, b}, [](Graph& gg, NodeId self) {
    const auto& ps = gg.parents(self);
    const Tensor& A = gg.value(ps[0]);
    const Tensor& B = gg.value(ps[1]);
    ConstMatMap dym(gg.grad(self).data.data(), A.dim(0), B.dim(0));
    MatMap(gg.grad_data(ps[0]).data(), A.dim(0), A.dim(1)).noalias() +=
        dym * B.mat();
    MatMap(gg.grad_data(ps[1]).data(), B.dim(0), B.dim(1)).noalias() +=
        dym.transpose() * A.mat();
  });
}

NodeId add_bias(Graph& g, NodeId a, NodeId bias) {
  require_rank2(g, a, "add_bias");
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(bias);
  require(tb.rank() == 1 && tb.dim(0) == ta.dim(1),
          "add_bias: bias length does not match columns", bias);
  Tensor v = ta;
  v.requires_grad = false;
  v.mat().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(tb.data.data(), tb.dim(0));
  return g.push(std::move(v), {a, bias}, [](Graph& gg, NodeId self) {
    const auto& ps = gg.parents(self);
    const Tensor& dy = gg.grad(self);
    gg.grad_data(ps[0]) += dy.data;
    ConstMatMap dym(dy.data.data(), dy.dim(0), dy.dim(1));
    Eigen::Map<Eigen::RowVectorXd>(gg.grad_data(ps[1]).data(), dy.dim(1)) +=
        dym.colwise().sum();
  });
}

NodeId l2_normalize_rows(Graph& g, NodeId a, Real eps) {
  require_rank2(g, a, "l2_normalize_rows");
  const Tensor& in = g.value(a);
  const Eigen::Index B = in.dim(0), D = in.dim(1);
  Tensor v = Tensor::zeros({B, D});
  Arr norms(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    norms[i] = in.mat().row(i).norm();
    v.mat().row(i) = in.mat().row(i) / (norms[i] + eps);
  }
  return g.push(std::move(v), {a}, [B, D, eps, norms](Graph& gg, NodeId self) {
    const NodeId p = gg.parents(self)[0];
    ConstMatMap x(gg.value(p).data.data(), B, D);
    ConstMatMap dy(gg.grad(self).data.data(), B, D);
    MatMap dx(gg.grad_data(p).data(), B, D);
    for (Eigen::Index i = 0; i < B; ++i) {
      const Real n = norms[i];
      const Real m = n + eps;
      dx.row(i) += dy.row(i) / m;
      if (n > 0.0) {
        const Real xdy = x.row(i).dot(dy.row(i));
        dx.row(i) -= x.row(i) * (xdy / (n * m * m));
      }
    }
  });
}

NodeId sum(Graph& g, NodeId a) {
  Tensor v = Tensor::scalar(g.value(a).data.sum());
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data[0];
  });
}

NodeId mean(Graph& g, NodeId a) {
  const Real n = static_cast<Real>(g.value(a).numel());
  Tensor v = Tensor::scalar(g.value(a).data.sum() / n);
  return g.push(std::move(v), {a}, [n](Graph& gg, NodeId self) {
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data[0] / n;
  });
}

NodeId rowsum(Graph& g, NodeId a) {
  require_rank2(g, a, "rowsum");
  const Tensor& in = g.value(a);
  const Eigen::Index B = in.dim(0), D = in.dim(1);
  Tensor v = Tensor::zeros({B});
  Eigen::Map<Vec>(v.data.data(), B) = in.mat().rowwise().sum();
  return g.push(std::move(v), {a}, [B, D](Graph& gg, NodeId self) {
    const Arr& dy = gg.grad(self).data;
    MatMap dx(gg.grad_data(gg.parents(self)[0]).data(), B, D);
    for (Eigen::Index i = 0; i < B; ++i) dx.row(i).array() += dy[i];
  });
}

NodeId weighted_mean(Graph& g, NodeId v, const Arr& w) {
  const Tensor& in = g.value(v);
  require(in.rank() == 1 && in.dim(0) == w.size(),
          "weighted_mean: weight length mismatch", v);
  const Real denom = w.sum();
  const Real val = denom > 0.0 ? (in.data * w).sum() / denom : 0.0;
  Tensor out = Tensor::scalar(val);
  return g.push(std::move(out), {v}, [w, denom](Graph& gg, NodeId self) {
    if (denom <= 0.0) return;
    gg.grad_data(gg.parents(self)[0]) += gg.grad(self).data[0] * w / denom;
  });
}

NodeId softmax_rows(Graph& g, NodeId a) {
  require_rank2(g, a, "softmax_rows");
  const Tensor& in = g.value(a);
  MatRM s;
  softmax_into(in.mat(), s);
  Tensor v = Tensor::from_matrix(s);
  return g.push(std::move(v), {a}, [](Graph& gg, NodeId self) {
    const Tensor& y = gg.value(self);
    ConstMatMap ym = y.mat();
    ConstMatMap dy(gg.grad(self).data.data(), y.dim(0), y.dim(1));
    MatMap dx(gg.grad_data(gg.parents(self)[0]).data(), y.dim(0), y.dim(1));
    for (Eigen::Index i = 0; i < ym.rows(); ++i) {
      const Real dot = dy.row(i).dot(ym.row(i));
      dx.row(i) += (ym.row(i).array() * (dy.row(i).array() - dot)).matrix();
    }
  });
}

NodeId log_softmax_rows(Graph& g, NodeId a) {
  require_rank2(g, a, "log_softmax_rows");
  const Tensor& in = g.value(a);
  const Eigen::Index B = in.dim(0), D = in.dim(1);
  Tensor v = Tensor::zeros({B, D});
  for (Eigen::Index i = 0; i < B; ++i) {
    const Real mx = in.mat().row(i).maxCoeff();
    const Real lse =
        mx + std::log((in.mat().row(i).array() - mx).exp().sum());
    v.mat().row(i) = in.mat().row(i).array() - lse;
  }
  return g.push(std::move(v), {a}, [B, D](Graph& gg, NodeId self) {
    ConstMatMap y(gg.value(self).data.data(), B, D);  // log-probs
    ConstMatMap dy(gg.grad(self).data.data(), B, D);
    MatMap dx(gg.grad_data(gg.parents(self)[0]).data(), B, D);
    for (Eigen::Index i = 0; i < B; ++i) {
      const Real s = dy.row(i).sum();
      dx.row(i) += (dy.row(i).array() - y.row(i).array().exp() * s).matrix();
    }
  });
}

NodeId softmax_xent_rows(Graph& g, NodeId logits, const std::vector<int>& labels,
                         const Arr& row_weights) {
  require_rank2(g, logits, "softmax_xent_rows");
  const Tensor& in = g.value(logits);
  const Eigen::Index B = in.dim(0), D = in.dim(1);
  require(static_cast<Eigen::Index>(labels.size()) == B,
          "softmax_xent_rows: label count mismatch", logits);
  require(row_weights.size() == B, "softmax_xent_rows: weight count mismatch",
          logits);
  for (int l : labels)
    require(l >= 0 && l < D, "softmax_xent_rows: label out of range", logits);
  const Real denom = row_weights.sum();
  Real acc = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    if (row_weights[i] == 0.0) continue;
    const Real mx = in.mat().row(i).maxCoeff();
    const Real lse = mx + std::log((in.mat().row(i).array() - mx).exp().sum());
    acc += row_weights[i] *
           (lse - in.mat()(i, labels[static_cast<std::size_t>(i)]));
  }
  Tensor v = Tensor::scalar(denom > 0.0 ? acc / denom : 0.0);
  return g.push(
      std::move(v), {logits},
      [labels, row_weights, denom, B, D](Graph& gg, NodeId self) {
        if (denom <= 0.0) return;
        const Real dscale = gg.grad(self).data[0] / denom;
        const NodeId p = gg.parents(self)[0];
        ConstMatMap x(gg.value(p).data.data(), B, D);
        MatMap dx(gg.grad_data(p).data(), B, D);
        for (Eigen::Index i = 0; i < B; ++i) {
          if (row_weights[i] == 0.0) continue;
          const Real mx = x.row(i).maxCoeff();
          Eigen::RowVectorXd sm = (x.row(i).array() - mx).exp().matrix();
          sm /= sm.sum();
          sm[labels[static_cast<std::size_t>(i)]] -= 1.0;
          dx.row(i) += sm * (dscale * row_weights[i]);
        }
      });
}

NodeId batch_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta,
                  BatchNormState state, bool train, bool update_running,
                  Real eps, Real momentum) {
  require_rank2(g, x, "batch_norm");
  const Tensor& in = g.value(x);
  const Eigen::Index B = in.dim(0), D = in.dim(1);
  require(g.value(gamma).numel() == D, "batch_norm: gamma length mismatch",
          gamma);
  require(g.value(beta).numel() == D, "batch_norm: beta length mismatch", beta);
  require(state.running_mean && state.running_var &&
              state.running_mean->numel() == D &&
              state.running_var->numel() == D,
          "batch_norm: running stats missing or mis-sized", x);
  if (train && B < 2)
    throw GradError("batch_norm: train mode needs B >= 2 (variance undefined)",
                    x);

  Arr mu(D), var(D);
  if (train) {
    for (Eigen::Index j = 0; j < D; ++j) {
      mu[j] = in.mat().col(j).mean();
      var[j] = (in.mat().col(j).array() - mu[j]).square().sum() /
               static_cast<Real>(B);
    }
    if (update_running) {
      // running stats track the unbiased variance
      const Real unbias = static_cast<Real>(B) / static_cast<Real>(B - 1);
      state.running_mean->data =
          (1.0 - momentum) * state.running_mean->data + momentum * mu;
      state.running_var->data = (1.0 - momentum) * state.running_var->data +
                                momentum * (var * unbias);
    }
  } else {
    mu = state.running_mean->data;
    var = state.running_var->data;
  }
  const Arr inv_sigma = (var + eps).sqrt().inverse();

  Tensor v = Tensor::zeros({B, D});
  MatRM xhat(B, D);
  const auto& gam = g.value(gamma).data;
  const auto& bet = g.value(beta).data;
  for (Eigen::Index j = 0; j < D; ++j) {
    xhat.col(j) = (in.mat().col(j).array() - mu[j]) * inv_sigma[j];
    v.mat().col(j) = xhat.col(j).array() * gam[j] + bet[j];
  }

  return g.push(
      std::move(v), {x, gamma, beta},
      [B, D, train, inv_sigma, xhat](Graph& gg, NodeId self) {
        const auto& ps = gg.parents(self);
        ConstMatMap dy(gg.grad(self).data.data(), B, D);
        MatMap dx(gg.grad_data(ps[0]).data(), B, D);
        Arr& dgamma = gg.grad_data(ps[1]);
        Arr& dbeta = gg.grad_data(ps[2]);
        const Arr& gam = gg.value(ps[1]).data;
        for (Eigen::Index j = 0; j < D; ++j) {
          const Real sum_dy = dy.col(j).sum();
          const Real sum_dy_xhat = dy.col(j).dot(xhat.col(j));
          dgamma[j] += sum_dy_xhat;
          dbeta[j] += sum_dy;
          if (train) {
            const Real nb = static_cast<Real>(B);
            dx.col(j) += (gam[j] * inv_sigma[j]) *
                         (dy.col(j).array() - sum_dy / nb -
                          xhat.col(j).array() * (sum_dy_xhat / nb))
                             .matrix();
          } else {
            dx.col(j) += dy.col(j) * (gam[j] * inv_sigma[j]);
          }
        }
      });
}

namespace {

struct ConvGeom {
  Eigen::Index B, C, H, W, F, kh, kw, OH, OW;
  int stride, pad;
};

void im2col(const Arr& x, const ConvGeom& geo, MatRM& col) {
  const Eigen::Index N = geo.B * geo.OH * geo.OW;
  const Eigen::Index K = geo.C * geo.kh * geo.kw;
  col.setZero(N, K);
  for (Eigen::Index b = 0; b < geo.B; ++b)
    for (Eigen::Index oy = 0; oy < geo.OH; ++oy)
      for (Eigen::Index ox = 0; ox < geo.OW; ++ox) {
        const Eigen::Index n = (b * geo.OH + oy) * geo.OW + ox;
        for (Eigen::Index c = 0; c < geo.C; ++c)
          for (Eigen::Index ky = 0; ky < geo.kh; ++ky) {
            const Eigen::Index iy = oy * geo.stride - geo.pad + ky;
            if (iy < 0 || iy >= geo.H) continue;
            for (Eigen::Index kx = 0; kx < geo.kw; ++kx) {
              const Eigen::Index ix = ox * geo.stride - geo.pad + kx;
              if (ix < 0 || ix >= geo.W) continue;
              col(n, (c * geo.kh + ky) * geo.kw + kx) =
                  x[((b * geo.C + c) * geo.H + iy) * geo.W + ix];
            }
          }
      }
}

void col2im_add(const MatRM& dcol, const ConvGeom& geo, Arr& dx) {
  for (Eigen::Index b = 0; b < geo.B; ++b)
    for (Eigen::Index oy = 0; oy < geo.OH; ++oy)
      for (Eigen::Index ox = 0; ox < geo.OW; ++ox) {
        const Eigen::Index n = (b * geo.OH + oy) * geo.OW + ox;
        for (Eigen::Index c = 0; c < geo.C; ++c)
          for (Eigen::Index ky = 0; ky < geo.kh; ++ky) {
            const Eigen::Index iy = oy * geo.stride - geo.pad + ky;
            if (iy < 0 || iy >= geo.H) continue;
            for (Eigen::Index kx = 0; kx < geo.kw; ++kx) {
              const Eigen::Index ix = ox * geo.stride - geo.pad + kx;
              if (ix < 0 || ix >= geo.W) continue;
              dx[((b * geo.C + c) * geo.H + iy) * geo.W + ix] +=
                  dcol(n, (c * geo.kh + ky) * geo.kw + kx);
            }
          }
      }
}

}  // namespace

NodeId conv2d(Graph& g, NodeId x, NodeId w, NodeId b, int stride, int pad) {
  const Tensor& in = g.value(x);
  const Tensor& wt = g.value(w);
  const Tensor& bt = g.value(b);
  require(in.rank() == 4, "conv2d: input must be [B,C,H,W]", x);
  require(wt.rank() == 4, "conv2d: weight must be [F,C,kh,kw]", w);
  require(wt.dim(1) == in.dim(1), "conv2d: channel mismatch", w);
  require(bt.rank() == 1 && bt.dim(0) == wt.dim(0),
          "conv2d: bias length mismatch", b);
  ConvGeom geo;
  geo.B = in.dim(0);
  geo.C = in.dim(1);
  geo.H = in.dim(2);
  geo.W = in.dim(3);
  geo.F = wt.dim(0);
  geo.kh = wt.dim(2);
  geo.kw = wt.dim(3);
  geo.stride = stride;
  geo.pad = pad;
  geo.OH = (geo.H + 2 * pad - geo.kh) / stride + 1;
  geo.OW = (geo.W + 2 * pad - geo.kw) / stride + 1;
  require(geo.OH >= 1 && geo.OW >= 1, "conv2d: output would be empty", x);

  const Eigen::Index N = geo.B * geo.OH * geo.OW;
  const Eigen::Index K = geo.C * geo.kh * geo.kw;
  MatRM col;
  im2col(in.data, geo, col);
  ConstMatMap wmat(wt.data.data(), geo.F, K);  // row f = flattened filter f
  MatRM yrows = col * wmat.transpose();        // [N, F]
  yrows.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bt.data.data(), geo.F);

  Tensor v = Tensor::zeros({geo.B, geo.F, geo.OH, geo.OW});
  for (Eigen::Index bb = 0; bb < geo.B; ++bb)
    for (Eigen::Index f = 0; f < geo.F; ++f)
      for (Eigen::Index oy = 0; oy < geo.OH; ++oy)
        for (Eigen::Index ox = 0; ox < geo.OW; ++ox)
          v.data[((bb * geo.F + f) * geo.OH + oy) * geo.OW + ox] =
              yrows((bb * geo.OH + oy) * geo.OW + ox, f);

  return g.push(std::move(v), {x, w, b}, [geo, N, K](Graph& gg, NodeId self) {
    const auto& ps = gg.parents(self);
    const Arr& dy = gg.grad(self).data;
    MatRM dyrows(N, geo.F);
    for (Eigen::Index bb = 0; bb < geo.B; ++bb)
      for (Eigen::Index f = 0; f < geo.F; ++f)
        for (Eigen::Index oy = 0; oy < geo.OH; ++oy)
          for (Eigen::Index ox = 0; ox < geo.OW; ++ox)
            dyrows((bb * geo.OH + oy) * geo.OW + ox, f) =
                dy[((bb * geo.F + f) * geo.OH + oy) * geo.OW + ox];

    // bias
    Eigen::Map<Eigen::RowVectorXd>(gg.grad_data(ps[2]).data(), geo.F) +=
        dyrows.colwise().sum();

    // recompute the column matrix; cheaper than retaining it per node
    MatRM col;
    im2col(gg.value(ps[0]).data, geo, col);
    MatMap dwmat(gg.grad_data(ps[1]).data(), geo.F, K);
    dwmat.noalias() += dyrows.transpose() * col;

    const Tensor& wt = gg.value(ps[1]);
    ConstMatMap wmat(wt.data.data(), geo.F, K);
    MatRM dcol = dyrows * wmat;  // [N, K]
    col2im_add(dcol, geo, gg.grad_data(ps[0]));
  });
}

NodeId global_avg_pool(Graph& g, NodeId x) {
  const Tensor& in = g.value(x);
  require(in.rank() == 4, "global_avg_pool: input must be [B,C,H,W]", x);
  const Eigen::Index B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const Real hw = static_cast<Real>(H * W);
  Tensor v = Tensor::zeros({B, C});
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index c = 0; c < C; ++c) {
      Real s = 0.0;
      const Eigen::Index base = (b * C + c) * H * W;
      for (Eigen::Index i = 0; i < H * W; ++i) s += in.data[base + i];
      v.data[b * C + c] = s / hw;
    }
  return g.push(std::move(v), {x}, [B, C, H, W, hw](Graph& gg, NodeId self) {
    const Arr& dy = gg.grad(self).data;
    Arr& dx = gg.grad_data(gg.parents(self)[0]);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c) {
        const Real v = dy[b * C + c] / hw;
        const Eigen::Index base = (b * C + c) * H * W;
        for (Eigen::Index i = 0; i < H * W; ++i) dx[base + i] += v;
      }
  });
}

}  // namespace stec::grad
