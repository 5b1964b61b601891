#pragma once

#include "stec/config.hpp"
#include "stec/dataset.hpp"

namespace stec::run {

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  long train_count = 0;
  long test_count = 0;
};

// frozen eval-mode features of plain (identity-view) images, [N x D]
grad::MatRM compute_features(const model::ParamStore& store,
                             const ExperimentCfg& cfg, const data::Dataset& ds);

// Linear classifier on a fixed feature matrix: minibatch SGD with Nesterov
// momentum, cosine decay, weight decay on the weight matrix only. The
// deterministic train/test split interleaves items by index.
ProbeResult probe_on_features(const grad::MatRM& features,
                              const std::vector<int>& labels, int classes,
                              const ExperimentCfg& cfg);

// the full protocol: features from a frozen encoder, then the probe pass
ProbeResult train_probe(const model::ParamStore& store, const ExperimentCfg& cfg,
                        const data::Dataset& ds);

}  // namespace stec::run
