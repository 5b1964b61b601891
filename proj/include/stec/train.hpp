#pragma once

#include "stec/checkpoint.hpp"
#include "stec/config.hpp"
#include "stec/dataset.hpp"
#include "stec/losses.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stec::run {

struct MetricsRecord {
  long step = 0;
  int epoch = 0;
  loss::LossBreakdown loss;
  double lr = 0.0;
  double ema_decay = 0.0;
  double clamp_rate = 0.0;
  double wall_time = 0.0;  // stdout only; kept out of metrics.jsonl so the
                           // stream is bit-reproducible
};

// deterministic serialization (alphabetical keys, shortest-roundtrip reals)
std::string metrics_json_line(const MetricsRecord& r);
MetricsRecord metrics_from_json_line(const std::string& line);

struct TrainAbort : std::runtime_error {
  std::string last_checkpoint;
  TrainAbort(const std::string& msg, std::string ckpt)
      : std::runtime_error(msg), last_checkpoint(std::move(ckpt)) {}
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  std::string final_checkpoint;
  long completed_steps = 0;
};

// parameter creation for the configured method (encoder + heads + targets)
model::ParamStore init_model(const ExperimentCfg& cfg);

// one optimization step's forward/backward on a prepared batch
struct StepOutput {
  loss::LossBreakdown breakdown;
  std::unordered_map<std::string, grad::Tensor> grads;
  double clamp_rate = 0.0;
};
StepOutput run_step(const ExperimentCfg& cfg, model::ParamStore& store,
                    const data::Batch& batch);

// Full SSL loop: per-step deterministic batches, LARS/SGD updates, EMA
// targets, JSONL metrics, per-interval checkpoints. Throws TrainAbort on a
// non-finite loss with the last good checkpoint retained on disk.
TrainResult train_ssl(const ExperimentCfg& cfg, const data::Dataset& ds,
                      const std::string& resume_checkpoint = "");

}  // namespace stec::run
