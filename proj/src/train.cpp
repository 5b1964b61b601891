#include "stec/train.hpp"

#include "stec/optim.hpp"
#include "stec/parallel.hpp"
#include "stec/rng.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

namespace stec::run {

namespace fs = std::filesystem;
using grad::Graph;
using grad::NodeId;
using model::Mode;
using nlohmann::json;

std::string metrics_json_line(const MetricsRecord& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["total"] = r.loss.total;
  j["id_loss"] = r.loss.id_loss;
  j["manip_loss"] = r.loss.manip_loss;
  j["reg_loss"] = r.loss.reg_loss;
  j["id_accuracy"] = r.loss.id_accuracy;
  j["manip_accuracy"] = r.loss.manip_accuracy;
  j["manip_empty"] = r.loss.manip_empty;
  j["lr"] = r.lr;
  j["ema_decay"] = r.ema_decay;
  j["clamp_rate"] = r.clamp_rate;
  return j.dump();
}

MetricsRecord metrics_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<long>();
  r.epoch = j.at("epoch").get<int>();
  r.loss.total = j.at("total").get<double>();
  r.loss.id_loss = j.at("id_loss").get<double>();
  r.loss.manip_loss = j.at("manip_loss").get<double>();
  r.loss.reg_loss = j.at("reg_loss").get<double>();
  r.loss.id_accuracy = j.at("id_accuracy").get<double>();
  r.loss.manip_accuracy = j.at("manip_accuracy").get<double>();
  r.loss.manip_empty = j.at("manip_empty").get<bool>();
  r.lr = j.at("lr").get<double>();
  r.ema_decay = j.at("ema_decay").get<double>();
  r.clamp_rate = j.at("clamp_rate").get<double>();
  return r;
}

model::ParamStore init_model(const ExperimentCfg& cfg) {
  model::ParamStore ps;
  model::init_encoder(ps, cfg.encoder, cfg.seed);
  model::init_projector(ps, cfg.encoder.feature_dim, cfg.heads, cfg.seed);
  if (cfg.uses_manip()) {
    const int out_dim = cfg.manip_kind == ManipLossKind::classification
                            ? 6 * cfg.binning.K
                            : 6;
    model::init_manip_head(ps, cfg.encoder.feature_dim, out_dim, cfg.heads,
                           cfg.seed);
  }
  if ((cfg.method == Method::byol || cfg.method == Method::byol_stec) &&
      cfg.heads.byol_predictor)
    model::init_predictor(ps, cfg.heads, cfg.seed);
  if (cfg.uses_target_network()) ps.init_shadow();
  return ps;
}

namespace {

// index lists for the two interleaved view sets
std::vector<int> even_rows(int B) {
  std::vector<int> v(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) v[static_cast<std::size_t>(i)] = 2 * i;
  return v;
}
std::vector<int> odd_rows(int B) {
  std::vector<int> v(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) v[static_cast<std::size_t>(i)] = 2 * i + 1;
  return v;
}

double clamp_rate_of(const ExperimentCfg& cfg, const data::Batch& batch) {
  long clamped = 0, total = 0;
  for (int i = 0; i < batch.pairs(); ++i) {
    act::ActionVec a;
    if (cfg.action_frame == ActionFrame::egocentric) {
      a = batch.ego_actions[static_cast<std::size_t>(i)].a_manip;
    } else {
      a = act::allocentric_action(
          batch.views[static_cast<std::size_t>(2 * i)].record,
          batch.views[static_cast<std::size_t>(2 * i + 1)].record,
          batch.source_width, batch.source_height);
    }
    for (int k = 0; k < 6; ++k) {
      total += 1;
      if (a[k] < cfg.binning.manip_min[k] || a[k] > cfg.binning.manip_max[k])
        clamped += 1;
    }
  }
  return total > 0 ? static_cast<double>(clamped) / static_cast<double>(total)
                   : 0.0;
}

// cosine-similarity retrieval accuracy between two embedding matrices
double pairing_accuracy(const grad::Tensor& a, const grad::Tensor& b,
                        const std::vector<int>& pair_index) {
  const Eigen::Index N = a.dim(0);
  grad::MatRM an = a.mat(), bn = b.mat();
  for (Eigen::Index i = 0; i < N; ++i) {
    const double na = an.row(i).norm(), nb = bn.row(i).norm();
    if (na > 0) an.row(i) /= na;
    if (nb > 0) bn.row(i) /= nb;
  }
  const grad::MatRM sims = an * bn.transpose();
  int correct = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index best = 0;
    sims.row(i).maxCoeff(&best);
    if (best == pair_index[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(N);
}

}  // namespace

StepOutput run_step(const ExperimentCfg& cfg, model::ParamStore& store,
                    const data::Batch& batch) {
  const int B = batch.pairs();
  Graph g;
  const NodeId images = g.leaf(data::views_to_tensor(batch.views));
  const NodeId h = model::encode(g, store, images, cfg.encoder, Mode::train);

  NodeId id_node = -1;
  double id_accuracy = 0.0;

  switch (cfg.method) {
    case Method::simclr:
    case Method::stec: {
      const NodeId z = model::project(g, store, h, cfg.heads, Mode::train);
      auto id = loss::ntxent_id_loss(g, z, batch.pair_index, cfg.tau);
      id_node = id.node;
      id_accuracy = id.accuracy;
      break;
    }
    case Method::byol:
    case Method::byol_stec: {
      NodeId z = model::project(g, store, h, cfg.heads, Mode::train);
      if (cfg.heads.byol_predictor)
        z = model::predict(g, store, z, cfg.heads, Mode::train);
      const NodeId ht = model::encode(g, store, images, cfg.encoder,
                                      Mode::train, "f.", /*use_shadow=*/true);
      const NodeId zt =
          model::project(g, store, ht, cfg.heads, Mode::train, "g.",
                         /*use_shadow=*/true, /*target_copy=*/true);
      id_node = loss::byol_id_loss(g, z, zt, batch.pair_index, cfg.byol_eps);
      id_accuracy = pairing_accuracy(g.value(z), g.value(zt), batch.pair_index);
      break;
    }
    case Method::relic:
    case Method::stec_star: {
      const NodeId z = model::project(g, store, h, cfg.heads, Mode::train);
      const NodeId ht = model::encode(g, store, images, cfg.encoder,
                                      Mode::train, "f.", /*use_shadow=*/true);
      const NodeId zt =
          model::project(g, store, ht, cfg.heads, Mode::train, "g.",
                         /*use_shadow=*/true, /*target_copy=*/true);
      const auto evens = even_rows(B);
      const auto odds = odd_rows(B);
      const NodeId z_a = grad::permute_rows(g, z, evens);
      const NodeId z_b = grad::permute_rows(g, z, odds);
      const NodeId zt_a = grad::permute_rows(g, zt, evens);
      const NodeId zt_b = grad::permute_rows(g, zt, odds);
      auto id = loss::relic_id_loss(g, z_a, z_b, zt_a, zt_b, cfg.tau, cfg.alpha);
      id_node = id.node;
      id_accuracy = id.accuracy;
      break;
    }
  }

  double manip_value = 0.0, manip_accuracy = 0.0;
  bool manip_empty = false;
  NodeId objective = id_node;

  if (cfg.uses_manip()) {
    const auto evens = even_rows(B);
    const auto odds = odd_rows(B);
    const NodeId h_a = grad::permute_rows(g, h, evens);
    const NodeId h_b = grad::permute_rows(g, h, odds);
    const NodeId out =
        model::manip_logits(g, store, h_a, h_b, cfg.heads, Mode::train);

    loss::ManipLoss ml;
    if (cfg.manip_kind == ManipLossKind::classification) {
      std::vector<std::array<int, 6>> bins(static_cast<std::size_t>(B));
      for (int i = 0; i < B; ++i) {
        if (cfg.action_frame == ActionFrame::egocentric) {
          bins[static_cast<std::size_t>(i)] =
              batch.ego_actions[static_cast<std::size_t>(i)].bins;
        } else {
          const act::ActionVec a = act::allocentric_action(
              batch.views[static_cast<std::size_t>(2 * i)].record,
              batch.views[static_cast<std::size_t>(2 * i + 1)].record,
              batch.source_width, batch.source_height);
          bins[static_cast<std::size_t>(i)] = act::bin_action(a, cfg.binning);
        }
      }
      ml = loss::manip_ce_loss(g, out, bins, batch.masks, cfg.binning.K);
    } else {
      std::vector<act::ActionVec> targets(static_cast<std::size_t>(B));
      for (int i = 0; i < B; ++i) {
        if (cfg.action_frame == ActionFrame::egocentric)
          targets[static_cast<std::size_t>(i)] =
              batch.ego_actions[static_cast<std::size_t>(i)].a_manip;
        else
          targets[static_cast<std::size_t>(i)] = act::allocentric_action(
              batch.views[static_cast<std::size_t>(2 * i)].record,
              batch.views[static_cast<std::size_t>(2 * i + 1)].record,
              batch.source_width, batch.source_height);
      }
      ml = loss::manip_l2_loss(g, out, targets, batch.masks);
    }
    manip_value = g.value(ml.node).scalar_value();
    manip_accuracy = ml.accuracy;
    manip_empty = ml.empty;
    objective = grad::add(g, id_node, grad::scale(g, ml.node, cfg.lambda_manip));
  }

  auto summary = grad::forward_backward(g, objective);

  StepOutput out;
  out.grads = std::move(summary.grads);
  out.breakdown = loss::make_breakdown(
      g.value(id_node).scalar_value(), manip_value, store.reg_loss(),
      cfg.lambda_manip, cfg.optim.weight_decay, id_accuracy, manip_accuracy,
      manip_empty);
  out.clamp_rate = clamp_rate_of(cfg, batch);
  return out;
}

TrainResult train_ssl(const ExperimentCfg& cfg, const data::Dataset& ds,
                      const std::string& resume_checkpoint) {
  cfg.validate();
  if (ds.count() < cfg.batch_size)
    throw ConfigError("dataset smaller than one batch");
  if (ds.height != cfg.resolution || ds.width != cfg.resolution)
    throw ConfigError("dataset resolution does not match config resolution");

  ExperimentCfg run_cfg = cfg;
  run_cfg.optim.steps_per_epoch = ds.count() / cfg.batch_size;
  const long total_steps = run_cfg.optim.total_steps();

  model::ParamStore store;
  long start_step = 0;
  if (!resume_checkpoint.empty()) {
    model::Checkpoint ck = model::load_checkpoint(resume_checkpoint);
    if (ck.config_hash != cfg.config_hash())
      throw ConfigError("resume checkpoint was produced by a different config");
    store = std::move(ck.store);
    start_step = ck.step;
  } else {
    store = init_model(cfg);
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream cf(fs::path(cfg.out_dir) / "config.txt");
    cf << canonical_config(cfg);
  }
  const std::string metrics_path =
      (fs::path(cfg.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, start_step > 0 ? std::ios::app
                                                     : std::ios::trunc);
  const std::string latest_ckpt =
      (fs::path(cfg.out_dir) / "ckpt_latest.stec").string();
  const std::string final_ckpt =
      (fs::path(cfg.out_dir) / "ckpt_final.stec").string();

  auto batch_for = [&](long step) {
    return data::make_batch(ds, cfg.batch_size, cfg.policy, cfg.binning,
                            derive_seed(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(step)));
  };

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::string last_ckpt = resume_checkpoint;

  // one-batch lookahead; batches are pure functions of (dataset, cfg, step)
  std::future<data::Batch> pending;
  if (start_step < total_steps && thread_budget() > 1)
    pending = std::async(std::launch::async, batch_for, start_step);

  for (long step = start_step; step < total_steps; ++step) {
    data::Batch batch = pending.valid() ? pending.get() : batch_for(step);
    if (step + 1 < total_steps && thread_budget() > 1)
      pending = std::async(std::launch::async, batch_for, step + 1);

    const double lr = opt::lr_at(step, run_cfg.optim);
    StepOutput so;
    try {
      so = run_step(run_cfg, store, batch);
      if (!std::isfinite(so.breakdown.total))
        throw opt::NanGradient("non-finite loss value");
      opt::lars_sgd_step(store, so.grads, lr, run_cfg.optim);
    } catch (const opt::NanGradient& e) {
      throw TrainAbort(std::string("training aborted at step ") +
                           std::to_string(step) + ": " + e.what(),
                       last_ckpt);
    }

    double ema_decay = 0.0;
    if (run_cfg.uses_target_network()) {
      ema_decay = model::ema_decay_at(step, total_steps, run_cfg.ema_tau0);
      model::ema_update(store, ema_decay);
    }

    const long done = step + 1;
    if (done % run_cfg.log_every == 0 || done == total_steps) {
      MetricsRecord rec;
      rec.step = done;
      rec.epoch = static_cast<int>(step / run_cfg.optim.steps_per_epoch);
      rec.loss = so.breakdown;
      rec.lr = lr;
      rec.ema_decay = ema_decay;
      rec.clamp_rate = so.clamp_rate;
      rec.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      metrics << metrics_json_line(rec) << "\n";
      metrics.flush();
      result.records.push_back(rec);
    }

    const long ckpt_interval =
        run_cfg.optim.steps_per_epoch * std::max(1, run_cfg.checkpoint_every);
    if (done % ckpt_interval == 0 && done != total_steps) {
      model::save_checkpoint(store, latest_ckpt, cfg.config_hash(), done);
      last_ckpt = latest_ckpt;
    }
  }

  model::save_checkpoint(store, final_ckpt, cfg.config_hash(), total_steps);
  result.final_checkpoint = final_ckpt;
  result.completed_steps = total_steps - start_step;
  return result;
}

}  // namespace stec::run
