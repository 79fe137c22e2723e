#include "embkit/sampler.hpp"

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"

namespace embkit {

using nlohmann::json;

namespace {
constexpr uint64_t kWorkerTag = 0x776f726b6572ULL;   // per-worker streams
constexpr uint64_t kShuffleTag = 0x73687566666cULL;  // per-epoch queue shuffles
}  // namespace

void SamplerConfig::validate() const {
  if (micro_batch_size < 1) throw ValidationError("sampler config: micro_batch_size must be >= 1");
  if (num_workers < 1) throw ValidationError("sampler config: num_workers must be >= 1");
  if (negatives_per_step < 1 || negatives_per_step > 24) {
    throw ValidationError("sampler config: negatives_per_step must be in [1, 24]");
  }
}

std::vector<size_t> sample_negative_subset(Rng& rng, size_t pool, size_t k) {
  return rng.distinct(pool, k);
}

MultitaskSampler::MultitaskSampler(const std::vector<Dataset>& datasets,
                                   const SamplerConfig& config, size_t epochs)
    : config_(config), max_epochs_(epochs) {
  config_.validate();
  if (datasets.empty()) throw ValidationError("sampler: no datasets");
  if (epochs < 1) throw ValidationError("sampler: epochs must be >= 1");
  for (const Dataset& d : datasets) {
    if (d.samples.empty()) {
      throw ValidationError("sampler: dataset \"" + d.name + "\" is empty");
    }
    DatasetState state;
    state.name = d.name;
    state.tasks.reserve(d.samples.size());
    state.pool_sizes.reserve(d.samples.size());
    for (const TrainingSample& s : d.samples) {
      state.tasks.push_back(s.task);
      state.pool_sizes.push_back(s.negatives.size());
    }
    datasets_.push_back(std::move(state));
  }
  for (size_t w = 0; w < config_.num_workers; ++w) {
    worker_rngs_.emplace_back(derive_seed(config_.seed, kWorkerTag, w));
  }
  refill(0);
}

void MultitaskSampler::refill(size_t epoch) {
  for (size_t d = 0; d < datasets_.size(); ++d) {
    DatasetState& state = datasets_[d];
    state.order.resize(state.tasks.size());
    for (size_t i = 0; i < state.order.size(); ++i) state.order[i] = i;
    Rng rng(derive_seed(config_.seed, kShuffleTag, epoch, d));
    rng.shuffle(state.order);
    state.cursor = 0;
  }
}

size_t MultitaskSampler::total_remaining() const {
  size_t total = 0;
  for (const DatasetState& d : datasets_) total += d.remaining();
  return total;
}

std::optional<MicroBatch> MultitaskSampler::next_micro_batch(size_t worker) {
  if (done_) return std::nullopt;
  if (total_remaining() == 0) {
    // Global epoch boundary: every queue is empty.
    if (epoch_ + 1 >= max_epochs_) {
      done_ = true;
      return std::nullopt;
    }
    ++epoch_;
    refill(epoch_);
  }

  Rng& rng = worker_rngs_[worker];
  uint64_t pick = rng.below(total_remaining());
  size_t chosen = 0;
  for (size_t d = 0; d < datasets_.size(); ++d) {
    const size_t rem = datasets_[d].remaining();
    if (pick < rem) {
      chosen = d;
      break;
    }
    pick -= rem;
  }

  DatasetState& state = datasets_[chosen];
  const size_t take = std::min(config_.micro_batch_size, state.remaining());

  MicroBatch micro;
  micro.worker = worker;
  micro.dataset = chosen;
  micro.source = state.name;
  micro.epoch = epoch_;
  micro.sample_indices.reserve(take);
  micro.negative_subsets.reserve(take);
  for (size_t i = 0; i < take; ++i) {
    const size_t sample = state.order[state.cursor++];
    micro.sample_indices.push_back(sample);
    if (state.tasks[sample] == TaskType::Classification) {
      micro.negative_subsets.push_back({0});
    } else {
      const size_t pool = state.pool_sizes[sample];
      micro.negative_subsets.push_back(
          sample_negative_subset(rng, pool, std::min(config_.negatives_per_step, pool)));
    }
  }
  return micro;
}

std::optional<MiniBatch> MultitaskSampler::next_mini_batch() {
  MiniBatch mini;
  for (size_t w = 0; w < config_.num_workers; ++w) {
    std::optional<MicroBatch> micro = next_micro_batch(w);
    if (!micro) break;  // end of training mid-step: emit what we have
    mini.micros.push_back(std::move(*micro));
  }
  if (mini.micros.empty()) return std::nullopt;
  mini.step = ++step_;
  return mini;
}

size_t count_steps(const std::vector<Dataset>& datasets, const SamplerConfig& config,
                   size_t epochs) {
  MultitaskSampler sampler(datasets, config, epochs);
  size_t steps = 0;
  while (sampler.next_mini_batch()) ++steps;
  return steps;
}

void append_trace(std::ostream& out, size_t step, const MicroBatch& micro) {
  json j;
  j["step"] = step;
  j["worker"] = micro.worker;
  j["source"] = micro.source;
  j["epoch"] = micro.epoch;
  j["sample_ids"] = micro.sample_indices;
  j["negative_subset_indices"] = micro.negative_subsets;
  out << j.dump() << '\n';
}

}  // namespace embkit
