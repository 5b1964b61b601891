#pragma once

#include "stec/config.hpp"
#include "stec/dataset.hpp"
#include "stec/train.hpp"

#include <string>
#include <vector>

namespace stec::analysis {

struct FeatureRow {
  int source_id = -1;
  int label = -1;
  double magnitude = 0.0;  // 1 - relative crop area
  Eigen::VectorXd f;
};

struct FeatureDump {
  int dim = 0;
  std::vector<FeatureRow> rows;
};

// Two deterministic passes over the dataset: identity-policy views
// (magnitude 0) followed by policy-augmented views. 2N rows total.
FeatureDump export_features(const model::ParamStore& store,
                            const run::ExperimentCfg& cfg,
                            const data::Dataset& ds,
                            const img::AugmentPolicy& policy,
                            std::uint64_t seed = 0xfea7);

void write_feature_csv(const FeatureDump& dump, const std::string& path);
FeatureDump read_feature_csv(const std::string& path);

struct CentroidReport {
  std::vector<int> classes;        // classes with both groups populated
  std::vector<double> distances;   // matching per-class centroid distances
  std::vector<int> skipped;        // classes missing one of the groups
  double mean_distance = 0.0;
};

// per class: Euclidean distance between the centroid of augmented rows
// (magnitude > threshold) and the centroid of unaugmented rows
CentroidReport centroid_separation(const FeatureDump& dump,
                                   double magnitude_threshold = 0.3);

// plain trailing-window mean; shared by the report and its brute-force check
double window_mean(const std::vector<double>& xs, std::size_t window);

// aggregates a metrics stream into a final summary (JSON text)
std::string accuracy_report(const std::vector<run::MetricsRecord>& records,
                            std::size_t window = 10);

std::vector<run::MetricsRecord> read_metrics_file(const std::string& path);

}  // namespace stec::analysis
