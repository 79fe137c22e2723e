#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "embkit/rng.hpp"
#include "embkit/types.hpp"

namespace embkit {

struct SamplerConfig {
  size_t micro_batch_size = 16;
  size_t num_workers = 4;  // simulated in-process
  size_t negatives_per_step = 7;
  uint64_t seed = 42;

  void validate() const;
};

struct Dataset {
  std::string name;
  std::vector<TrainingSample> samples;
};

// One worker's draw for one step: homogeneous by source, with the active
// negative-subset indices attached per sample.
struct MicroBatch {
  size_t worker = 0;
  size_t dataset = 0;
  std::string source;
  size_t epoch = 0;
  std::vector<size_t> sample_indices;                 // into the dataset
  std::vector<std::vector<size_t>> negative_subsets;  // into each sample's pool
};

struct MiniBatch {
  size_t step = 0;  // 1-based optimization step
  std::vector<MicroBatch> micros;
};

// Epoch-aligned multitask sampling: each worker picks a source with
// probability proportional to its remaining unconsumed count, so every
// dataset finishes epoch k before any dataset enters epoch k+1. Queues
// refill (reshuffled) only when all of them are empty.
class MultitaskSampler {
 public:
  // Keeps only per-sample metadata (task, pool size); `datasets` may be
  // discarded by the caller afterwards.
  MultitaskSampler(const std::vector<Dataset>& datasets, const SamplerConfig& config,
                   size_t epochs);

  // nullopt at end of training. The final mini batch may carry fewer than
  // num_workers micro batches if the data runs out mid-step.
  std::optional<MiniBatch> next_mini_batch();

  size_t epoch() const { return epoch_; }
  size_t steps_emitted() const { return step_; }

 private:
  struct DatasetState {
    std::string name;
    std::vector<TaskType> tasks;
    std::vector<size_t> pool_sizes;
    std::vector<size_t> order;  // shuffled queue for the current epoch
    size_t cursor = 0;

    size_t remaining() const { return order.size() - cursor; }
  };

  std::optional<MicroBatch> next_micro_batch(size_t worker);
  void refill(size_t epoch);
  size_t total_remaining() const;

  SamplerConfig config_;
  size_t max_epochs_;
  std::vector<DatasetState> datasets_;
  std::vector<Rng> worker_rngs_;
  size_t epoch_ = 0;
  size_t step_ = 0;
  bool done_ = false;
};

// Uniform k-subset of [0, pool) in draw order; consumes the worker stream.
std::vector<size_t> sample_negative_subset(Rng& rng, size_t pool, size_t k);

// Total number of mini batches a full run will emit (deterministic replay).
size_t count_steps(const std::vector<Dataset>& datasets, const SamplerConfig& config,
                   size_t epochs);

// One trace line per micro batch:
// {"step", "worker", "source", "sample_ids", "negative_subset_indices", "epoch"}
void append_trace(std::ostream& out, size_t step, const MicroBatch& micro);

}  // namespace embkit
