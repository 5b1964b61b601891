#include "stec/analysis.hpp"

#include "stec/augment.hpp"
#include "stec/nets.hpp"
#include "stec/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stec::analysis {

using grad::Graph;
using grad::MatRM;
using grad::NodeId;
using nlohmann::json;

namespace {

MatRM encode_views(const model::ParamStore& store, const run::ExperimentCfg& cfg,
                   const std::vector<img::AugmentedView>& views) {
  model::ParamStore local = store;
  MatRM out(static_cast<Eigen::Index>(views.size()), cfg.encoder.feature_dim);
  const int chunk = 128;
  const int n = static_cast<int>(views.size());
  for (int begin = 0; begin < n; begin += chunk) {
    const int count = std::min(chunk, n - begin);
    std::vector<img::AugmentedView> slice(
        views.begin() + begin, views.begin() + begin + count);
    Graph g;
    const NodeId x = g.leaf(data::views_to_tensor(slice));
    const NodeId h = model::encode(g, local, x, cfg.encoder, model::Mode::eval);
    out.middleRows(begin, count) = g.value(h).mat();
  }
  return out;
}

}  // namespace

FeatureDump export_features(const model::ParamStore& store,
                            const run::ExperimentCfg& cfg,
                            const data::Dataset& ds,
                            const img::AugmentPolicy& policy,
                            std::uint64_t seed) {
  const int N = ds.count();
  const img::AugmentPolicy id_policy = img::AugmentPolicy::identity(cfg.resolution);

  std::vector<img::AugmentedView> views(static_cast<std::size_t>(2 * N));
  for (int i = 0; i < N; ++i) {
    Rng rng_id(derive_seed(seed, static_cast<std::uint64_t>(i), 1));
    views[static_cast<std::size_t>(i)] =
        img::augment_view(ds.images[static_cast<std::size_t>(i)], id_policy,
                          rng_id, i);
    Rng rng_aug(derive_seed(seed, static_cast<std::uint64_t>(i), 2));
    views[static_cast<std::size_t>(N + i)] =
        img::augment_view(ds.images[static_cast<std::size_t>(i)], policy,
                          rng_aug, i);
  }

  const MatRM feats = encode_views(store, cfg, views);

  FeatureDump dump;
  dump.dim = cfg.encoder.feature_dim;
  dump.rows.resize(static_cast<std::size_t>(2 * N));
  for (int r = 0; r < 2 * N; ++r) {
    const auto& v = views[static_cast<std::size_t>(r)];
    FeatureRow row;
    row.source_id = v.source_id;
    row.label = ds.labels[static_cast<std::size_t>(v.source_id)];
    row.magnitude =
        1.0 - img::relative_crop_area(v.record, ds.width, ds.height);
    row.f = feats.row(r);
    dump.rows[static_cast<std::size_t>(r)] = std::move(row);
  }
  return dump;
}

void write_feature_csv(const FeatureDump& dump, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "source_id,label,magnitude";
  for (int d = 0; d < dump.dim; ++d) f << ",f" << d;
  f << "\n";
  char buf[32];
  for (const auto& row : dump.rows) {
    f << row.source_id << "," << row.label;
    std::snprintf(buf, sizeof buf, "%.17g", row.magnitude);
    f << "," << buf;
    for (int d = 0; d < dump.dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", row.f[d]);
      f << "," << buf;
    }
    f << "\n";
  }
}

FeatureDump read_feature_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("feature csv: missing header");
  int dim = -3;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) ++dim;
  }
  if (dim < 1) throw std::runtime_error("feature csv: malformed header");

  FeatureDump dump;
  dump.dim = dim;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    FeatureRow row;
    std::getline(ss, cell, ',');
    row.source_id = std::stoi(cell);
    std::getline(ss, cell, ',');
    row.label = std::stoi(cell);
    std::getline(ss, cell, ',');
    row.magnitude = std::stod(cell);
    row.f.resize(dim);
    for (int d = 0; d < dim; ++d) {
      std::getline(ss, cell, ',');
      row.f[d] = std::stod(cell);
    }
    dump.rows.push_back(std::move(row));
  }
  return dump;
}

CentroidReport centroid_separation(const FeatureDump& dump,
                                   double magnitude_threshold) {
  std::map<int, std::pair<Eigen::VectorXd, long>> plain, aug;
  for (const auto& row : dump.rows) {
    // rows with 0 < magnitude <= threshold belong to neither group
    std::map<int, std::pair<Eigen::VectorXd, long>>* bucket = nullptr;
    if (row.magnitude == 0.0)
      bucket = &plain;
    else if (row.magnitude > magnitude_threshold)
      bucket = &aug;
    else
      continue;
    auto it = bucket->find(row.label);
    if (it == bucket->end()) {
      (*bucket)[row.label] = {row.f, 1};
    } else {
      it->second.first += row.f;
      it->second.second += 1;
    }
  }

  CentroidReport rep;
  std::map<int, bool> all_labels;
  for (const auto& [label, v] : plain) all_labels[label] = true;
  for (const auto& [label, v] : aug) all_labels[label] = true;

  double acc = 0.0;
  for (const auto& [label, unused] : all_labels) {
    const auto pit = plain.find(label);
    const auto ait = aug.find(label);
    if (pit == plain.end() || ait == aug.end()) {
      rep.skipped.push_back(label);
      continue;
    }
    const Eigen::VectorXd c0 =
        pit->second.first / static_cast<double>(pit->second.second);
    const Eigen::VectorXd c1 =
        ait->second.first / static_cast<double>(ait->second.second);
    const double d = (c0 - c1).norm();
    rep.classes.push_back(label);
    rep.distances.push_back(d);
    acc += d;
  }
  rep.mean_distance =
      rep.distances.empty() ? 0.0 : acc / static_cast<double>(rep.distances.size());
  return rep;
}

double window_mean(const std::vector<double>& xs, std::size_t window) {
  if (xs.empty()) return 0.0;
  const std::size_t w = std::min(window == 0 ? xs.size() : window, xs.size());
  double acc = 0.0;
  for (std::size_t i = xs.size() - w; i < xs.size(); ++i) acc += xs[i];
  return acc / static_cast<double>(w);
}

std::string accuracy_report(const std::vector<run::MetricsRecord>& records,
                            std::size_t window) {
  json j;
  j["records"] = records.size();
  if (records.empty()) return j.dump(2);

  std::vector<double> id_acc, manip_acc, total;
  for (const auto& r : records) {
    id_acc.push_back(r.loss.id_accuracy);
    manip_acc.push_back(r.loss.manip_accuracy);
    total.push_back(r.loss.total);
  }
  const auto& last = records.back();
  j["final"] = {{"step", last.step},
                {"epoch", last.epoch},
                {"total", last.loss.total},
                {"id_loss", last.loss.id_loss},
                {"manip_loss", last.loss.manip_loss},
                {"id_accuracy", last.loss.id_accuracy},
                {"manip_accuracy", last.loss.manip_accuracy}};
  j["window"] = window;
  j["window_mean"] = {{"id_accuracy", window_mean(id_acc, window)},
                      {"manip_accuracy", window_mean(manip_acc, window)},
                      {"total", window_mean(total, window)}};
  return j.dump(2);
}

std::vector<run::MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics file " + path);
  std::vector<run::MetricsRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(run::metrics_from_json_line(line));
  }
  return out;
}

}  // namespace stec::analysis
