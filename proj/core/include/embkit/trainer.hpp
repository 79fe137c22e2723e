#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "embkit/encoder.hpp"
#include "embkit/sampler.hpp"
#include "embkit/types.hpp"

namespace embkit {

struct TrainConfig {
  double peak_lr = 0.5;       // desk-scale default for the hashing encoder
  size_t warmup_steps = 50;
  size_t epochs = 2;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double temperature = 0.05;
  std::optional<double> grad_clip;
  uint64_t seed = 42;

  void validate() const;
};

// Linear warmup 0 -> peak over warmup_steps, then cosine decay
// 0.5 * peak * (1 + cos(pi * (step - warmup) / (total - warmup))), reaching
// exactly 0 at total_steps. `step` is the 1-based optimization step.
double lr_schedule(size_t step, const TrainConfig& config, size_t total_steps);

struct StepReport {
  size_t step = 0;
  size_t epoch = 0;
  double lr = 0.0;
  double loss_hard = 0.0;
  std::optional<double> loss_in_batch;  // absent when no retrieval micro batch
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;  // console diagnostics only; kept out of the metrics log
};

// A sampler micro batch resolved against the dataset storage.
struct ResolvedMicroBatch {
  std::string source;
  size_t epoch = 0;
  std::vector<const TrainingSample*> samples;
  std::vector<std::vector<size_t>> negative_subsets;
};

struct LossAndGrads {
  double loss = 0.0;
  double loss_hard = 0.0;
  std::optional<double> loss_in_batch;
  GradBuffer grads;
};

// Forward + backward for one mini batch without touching the optimizer:
// encodes instructed queries, positives and active negatives; hard-negative
// loss for every sample; in-batch loss over the positives of all retrieval
// samples in the mini batch. Losses reduce as the mean over each micro
// batch, averaged across micro batches (mirrors per-worker means + gradient
// averaging).
LossAndGrads compute_loss_and_grads(const std::vector<ResolvedMicroBatch>& mini_batch,
                                    const EncoderParams& params,
                                    const EncoderConfig& encoder_config,
                                    const TrainConfig& config, int threads = 1);

// One optimization step: compute_loss_and_grads, optional gradient clipping,
// then AdamW with decoupled weight decay at the given lr.
StepReport train_step(const std::vector<ResolvedMicroBatch>& mini_batch,
                      EncoderParams& params, const EncoderConfig& encoder_config,
                      const TrainConfig& config, double lr, int threads = 1);

struct OutputConfig {
  std::string checkpoint_dir = "checkpoints";
  std::string metrics_path = "metrics.jsonl";
  std::string trace_path;        // empty = no trace dump
  size_t checkpoint_interval = 0;  // 0 = final checkpoint only
};

struct RunConfig {
  EncoderConfig encoder;
  SamplerConfig sampler;
  TrainConfig trainer;
  std::vector<std::string> train_paths;
  OutputConfig output;
};

// JSON run config; relative paths resolve against the config file directory.
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

struct TrainSummary {
  size_t total_steps = 0;
  size_t steps_run = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
  std::string final_checkpoint;
};

// Full training run. Each train path holds one data source (uniform
// `source` field). Resuming replays the deterministic sampler up to the
// checkpoint step, so a resumed run continues bit-identically.
TrainSummary train(const RunConfig& config, const std::string& resume_path = {},
                   int threads = 1, std::ostream* console = nullptr);

// Loads the train datasets of a run config (one Dataset per file, named by
// its uniform source).
std::vector<Dataset> load_datasets(const std::vector<std::string>& paths);

}  // namespace embkit
