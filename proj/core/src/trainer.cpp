#include "embkit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"
#include "embkit/objective.hpp"
#include "embkit/parallel.hpp"
#include "embkit/samples_io.hpp"
#include "embkit/similarity.hpp"

namespace embkit {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (peak_lr <= 0.0) throw ValidationError("train config: peak_lr must be > 0");
  if (epochs < 1) throw ValidationError("train config: epochs must be >= 1");
  if (weight_decay < 0.0) throw ValidationError("train config: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train config: betas must be in [0, 1)");
  }
  if (eps <= 0.0) throw ValidationError("train config: eps must be > 0");
  if (temperature <= 0.0) throw ValidationError("train config: temperature must be > 0");
  if (grad_clip && *grad_clip <= 0.0) throw ValidationError("train config: grad_clip must be > 0");
}

double lr_schedule(size_t step, const TrainConfig& config, size_t total_steps) {
  if (total_steps <= config.warmup_steps) {
    throw ValidationError("lr_schedule: total_steps (" + std::to_string(total_steps) +
                          ") must exceed warmup_steps (" + std::to_string(config.warmup_steps) +
                          ")");
  }
  if (step > total_steps) {
    throw ValidationError("lr_schedule: step " + std::to_string(step) + " beyond total_steps " +
                          std::to_string(total_steps));
  }
  if (step < config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(total_steps - config.warmup_steps);
  return 0.5 * config.peak_lr * (1.0 + std::cos(progress * 3.14159265358979323846));
}

namespace {

struct EncodedText {
  Tape tape;
  Embedding unit;
  std::vector<double> grad;  // d loss / d embedding, accumulated
};

// AdamW over one parameter array. Moments and weights are stored as float32
// and re-read after rounding, so an update recomputed from a checkpoint is
// bit-identical.
void adamw_array(std::vector<float>& p, std::vector<float>& m, std::vector<float>& v,
                 const std::function<double(size_t)>& grad_at, const TrainConfig& cfg,
                 double lr, double bias1, double bias2) {
  for (size_t i = 0; i < p.size(); ++i) {
    const double g = grad_at(i);
    m[i] = static_cast<float>(cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g);
    v[i] = static_cast<float>(cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g);
    const double m_hat = static_cast<double>(m[i]) / bias1;
    const double v_hat = static_cast<double>(v[i]) / bias2;
    const double delta =
        lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * static_cast<double>(p[i]));
    p[i] = static_cast<float>(static_cast<double>(p[i]) - delta);
  }
}

}  // namespace

LossAndGrads compute_loss_and_grads(const std::vector<ResolvedMicroBatch>& mini_batch,
                                    const EncoderParams& params,
                                    const EncoderConfig& encoder_config,
                                    const TrainConfig& config, int threads) {
  config.validate();
  if (mini_batch.empty()) throw ValidationError("train_step: empty mini batch");

  struct SampleSlot {
    const TrainingSample* sample = nullptr;
    double weight = 0.0;
    size_t micro = 0;
    size_t pos_in_micro = 0;
    size_t query = 0;  // indices into the encoded-text table
    size_t positive = 0;
    std::vector<size_t> negatives;
  };

  std::vector<SampleSlot> slots;
  std::vector<std::string> texts;
  auto add_text = [&](std::string t) {
    texts.push_back(std::move(t));
    return texts.size() - 1;
  };

  for (size_t w = 0; w < mini_batch.size(); ++w) {
    const ResolvedMicroBatch& micro = mini_batch[w];
    if (micro.samples.empty()) throw ValidationError("train_step: empty micro batch");
    if (micro.samples.size() != micro.negative_subsets.size()) {
      throw ValidationError("train_step: negative subsets do not align with samples");
    }
    const double weight =
        1.0 / (static_cast<double>(mini_batch.size()) * static_cast<double>(micro.samples.size()));
    for (size_t k = 0; k < micro.samples.size(); ++k) {
      const TrainingSample& s = *micro.samples[k];
      SampleSlot slot;
      slot.sample = &s;
      slot.weight = weight;
      slot.micro = w;
      slot.pos_in_micro = k;
      slot.query = add_text(format_query(s.instruction, s.query));
      slot.positive = add_text(s.positive);
      for (size_t neg_index : micro.negative_subsets[k]) {
        if (neg_index >= s.negatives.size()) {
          throw ValidationError("train_step: negative subset index out of range");
        }
        slot.negatives.push_back(add_text(s.negatives[neg_index]));
      }
      if (slot.negatives.empty()) {
        throw ValidationError("train_step: sample with empty active negatives");
      }
      slots.push_back(std::move(slot));
    }
  }

  std::vector<EncodedText> encoded(texts.size());
  parallel_for(texts.size(), threads, [&](size_t i) {
    encoded[i].unit = encode(texts[i], params, encoder_config, encoded[i].tape);
    encoded[i].grad.assign(encoder_config.dim, 0.0);
  });

  auto offending = [&](const SampleSlot& slot) {
    return "worker " + std::to_string(slot.micro) + " sample " +
           std::to_string(slot.pos_in_micro) + " of source \"" +
           mini_batch[slot.micro].source + "\"";
  };

  // Hard-negative loss for every sample.
  double hard_total = 0.0;
  std::vector<double> hard_losses(slots.size());
  std::vector<HardLossResult> hard_results(slots.size());
  parallel_for(slots.size(), threads, [&](size_t si) {
    const SampleSlot& slot = slots[si];
    SimilarityRow row;
    row.temperature = config.temperature;
    row.pos_score = dot(encoded[slot.query].unit, encoded[slot.positive].unit);
    row.neg_scores.reserve(slot.negatives.size());
    for (size_t n : slot.negatives) {
      row.neg_scores.push_back(dot(encoded[slot.query].unit, encoded[n].unit));
    }
    hard_results[si] = hard_negative_loss(row);
    hard_losses[si] = hard_results[si].loss;
  });
  for (size_t si = 0; si < slots.size(); ++si) {
    const SampleSlot& slot = slots[si];
    const HardLossResult& hard = hard_results[si];
    if (!std::isfinite(hard.loss)) {
      throw std::runtime_error("train_step: non-finite hard loss at " + offending(slot));
    }
    hard_total += slot.weight * hard.loss;
    auto& q_grad = encoded[slot.query].grad;
    auto& p_grad = encoded[slot.positive].grad;
    const auto& q_unit = encoded[slot.query].unit;
    const auto& p_unit = encoded[slot.positive].unit;
    for (uint32_t k = 0; k < encoder_config.dim; ++k) {
      q_grad[k] += slot.weight * hard.grad_pos * p_unit[k];
      p_grad[k] += slot.weight * hard.grad_pos * q_unit[k];
    }
    for (size_t j = 0; j < slot.negatives.size(); ++j) {
      auto& n_grad = encoded[slot.negatives[j]].grad;
      const auto& n_unit = encoded[slot.negatives[j]].unit;
      for (uint32_t k = 0; k < encoder_config.dim; ++k) {
        q_grad[k] += slot.weight * hard.grad_negs[j] * n_unit[k];
        n_grad[k] += slot.weight * hard.grad_negs[j] * q_unit[k];
      }
    }
  }

  // In-batch loss across the retrieval samples of the whole mini batch.
  std::vector<size_t> retrieval;
  for (size_t si = 0; si < slots.size(); ++si) {
    if (slots[si].sample->task == TaskType::Retrieval) retrieval.push_back(si);
  }
  std::optional<double> in_batch_total;
  if (!retrieval.empty()) {
    const size_t b = retrieval.size();
    BatchScores scores(b);
    for (size_t i = 0; i < b; ++i) {
      for (size_t j = 0; j < b; ++j) {
        scores.at(i, j) =
            dot(encoded[slots[retrieval[i]].query].unit, encoded[slots[retrieval[j]].positive].unit);
      }
    }
    double total = 0.0;
    for (size_t i = 0; i < b; ++i) {
      const SampleSlot& slot = slots[retrieval[i]];
      const InBatchLossResult r = in_batch_loss(scores, i, config.temperature);
      if (!std::isfinite(r.loss)) {
        throw std::runtime_error("train_step: non-finite in-batch loss at " + offending(slot));
      }
      total += slot.weight * r.loss;
      auto& q_grad = encoded[slot.query].grad;
      const auto& q_unit = encoded[slot.query].unit;
      for (size_t j = 0; j < b; ++j) {
        auto& p_grad = encoded[slots[retrieval[j]].positive].grad;
        const auto& p_unit = encoded[slots[retrieval[j]].positive].unit;
        for (uint32_t k = 0; k < encoder_config.dim; ++k) {
          q_grad[k] += slot.weight * r.grad_row[j] * p_unit[k];
          p_grad[k] += slot.weight * r.grad_row[j] * q_unit[k];
        }
      }
    }
    in_batch_total = total;
  }

  // Backpropagate into the parameters.
  LossAndGrads result{0.0, hard_total, in_batch_total, GradBuffer(encoder_config)};
  for (EncodedText& e : encoded) {
    backward(e.tape, e.grad, params, encoder_config, result.grads);
  }
  result.loss = hard_total + in_batch_total.value_or(0.0);
  if (!std::isfinite(result.loss)) throw std::runtime_error("train_step: non-finite loss");
  return result;
}

StepReport train_step(const std::vector<ResolvedMicroBatch>& mini_batch, EncoderParams& params,
                      const EncoderConfig& encoder_config, const TrainConfig& config, double lr,
                      int threads) {
  const auto started = std::chrono::steady_clock::now();
  LossAndGrads fb = compute_loss_and_grads(mini_batch, params, encoder_config, config, threads);
  GradBuffer& grads = fb.grads;

  double grad_norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(grad_norm)) {
    throw std::runtime_error("train_step: non-finite gradient norm");
  }
  if (config.grad_clip && grad_norm > *config.grad_clip) {
    grads.scale(*config.grad_clip / grad_norm);
  }

  params.step += 1;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(params.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(params.step));
  const uint32_t d = encoder_config.dim;
  adamw_array(
      params.table, params.m_table, params.v_table,
      [&](size_t i) -> double {
        const uint32_t bucket = static_cast<uint32_t>(i / d);
        auto it = grads.table_rows.find(bucket);
        return it == grads.table_rows.end() ? 0.0 : it->second[i % d];
      },
      config, lr, bias1, bias2);
  adamw_array(
      params.proj, params.m_proj, params.v_proj, [&](size_t i) { return grads.proj[i]; }, config,
      lr, bias1, bias2);
  params.revision += 1;

  StepReport report;
  report.lr = lr;
  report.loss_hard = fb.loss_hard;
  report.loss_in_batch = fb.loss_in_batch;
  report.loss = fb.loss;
  report.grad_norm = grad_norm;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             started)
                       .count();
  return report;
}

std::vector<Dataset> load_datasets(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ValidationError("train: no dataset paths configured");
  std::vector<Dataset> datasets;
  std::unordered_set<std::string> names;
  for (const std::string& path : paths) {
    Dataset d;
    d.samples = read_samples(path);
    if (d.samples.empty()) throw ValidationError(path + ": dataset is empty");
    d.name = d.samples.front().source;
    for (size_t i = 0; i < d.samples.size(); ++i) {
      if (d.samples[i].source != d.name) {
        throw ValidationError(path + ": sample " + std::to_string(i) + " has source \"" +
                              d.samples[i].source + "\" but the file began with \"" + d.name +
                              "\"; one source per dataset file");
      }
    }
    if (!names.insert(d.name).second) {
      throw ValidationError("train: duplicate dataset source \"" + d.name + "\"");
    }
    datasets.push_back(std::move(d));
  }
  return datasets;
}

namespace {

json step_report_json(const StepReport& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["loss_hard"] = r.loss_hard;
  if (r.loss_in_batch) {
    j["loss_in_batch"] = *r.loss_in_batch;
  } else {
    j["loss_in_batch"] = nullptr;
  }
  j["loss"] = r.loss;
  j["grad_norm"] = r.grad_norm;
  return j;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad run config: " + e.what());
  }

  RunConfig cfg;
  try {
    if (j.contains("encoder")) {
      const json& e = j["encoder"];
      cfg.encoder.buckets = e.value("buckets", cfg.encoder.buckets);
      cfg.encoder.dim = e.value("dim", cfg.encoder.dim);
      cfg.encoder.max_tokens = e.value("max_tokens", cfg.encoder.max_tokens);
      cfg.encoder.seed = e.value("seed", cfg.encoder.seed);
    }
    if (j.contains("sampler")) {
      const json& s = j["sampler"];
      cfg.sampler.micro_batch_size = s.value("micro_batch_size", cfg.sampler.micro_batch_size);
      cfg.sampler.num_workers = s.value("num_workers", cfg.sampler.num_workers);
      cfg.sampler.negatives_per_step = s.value("negatives_per_step", cfg.sampler.negatives_per_step);
      cfg.sampler.seed = s.value("seed", cfg.sampler.seed);
    }
    if (j.contains("trainer")) {
      const json& t = j["trainer"];
      cfg.trainer.peak_lr = t.value("peak_lr", cfg.trainer.peak_lr);
      cfg.trainer.warmup_steps = t.value("warmup_steps", cfg.trainer.warmup_steps);
      cfg.trainer.epochs = t.value("epochs", cfg.trainer.epochs);
      cfg.trainer.weight_decay = t.value("weight_decay", cfg.trainer.weight_decay);
      cfg.trainer.beta1 = t.value("beta1", cfg.trainer.beta1);
      cfg.trainer.beta2 = t.value("beta2", cfg.trainer.beta2);
      cfg.trainer.eps = t.value("eps", cfg.trainer.eps);
      cfg.trainer.temperature = t.value("temperature", cfg.trainer.temperature);
      if (t.contains("grad_clip") && !t["grad_clip"].is_null()) {
        cfg.trainer.grad_clip = t["grad_clip"].get<double>();
      }
      cfg.trainer.seed = t.value("seed", cfg.trainer.seed);
    }
    if (j.contains("data")) {
      cfg.train_paths = j["data"].value("train", std::vector<std::string>{});
    }
    if (j.contains("output")) {
      const json& o = j["output"];
      cfg.output.checkpoint_dir = o.value("checkpoint_dir", cfg.output.checkpoint_dir);
      cfg.output.metrics_path = o.value("metrics", cfg.output.metrics_path);
      cfg.output.trace_path = o.value("trace", cfg.output.trace_path);
      cfg.output.checkpoint_interval = o.value("checkpoint_interval", cfg.output.checkpoint_interval);
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad run config: " + e.what());
  }

  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
  };
  for (std::string& p : cfg.train_paths) resolve(p);
  resolve(cfg.output.checkpoint_dir);
  resolve(cfg.output.metrics_path);
  resolve(cfg.output.trace_path);

  cfg.encoder.validate();
  cfg.sampler.validate();
  cfg.trainer.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["encoder"] = {{"buckets", cfg.encoder.buckets},
                  {"dim", cfg.encoder.dim},
                  {"max_tokens", cfg.encoder.max_tokens},
                  {"seed", cfg.encoder.seed}};
  j["sampler"] = {{"micro_batch_size", cfg.sampler.micro_batch_size},
                  {"num_workers", cfg.sampler.num_workers},
                  {"negatives_per_step", cfg.sampler.negatives_per_step},
                  {"seed", cfg.sampler.seed}};
  j["trainer"] = {{"peak_lr", cfg.trainer.peak_lr},
                  {"warmup_steps", cfg.trainer.warmup_steps},
                  {"epochs", cfg.trainer.epochs},
                  {"weight_decay", cfg.trainer.weight_decay},
                  {"beta1", cfg.trainer.beta1},
                  {"beta2", cfg.trainer.beta2},
                  {"eps", cfg.trainer.eps},
                  {"temperature", cfg.trainer.temperature},
                  {"grad_clip", cfg.trainer.grad_clip ? json(*cfg.trainer.grad_clip) : json(nullptr)},
                  {"seed", cfg.trainer.seed}};
  j["data"] = {{"train", cfg.train_paths}};
  j["output"] = {{"checkpoint_dir", cfg.output.checkpoint_dir},
                 {"metrics", cfg.output.metrics_path},
                 {"trace", cfg.output.trace_path},
                 {"checkpoint_interval", cfg.output.checkpoint_interval}};
  return j.dump(2);
}

TrainSummary train(const RunConfig& config, const std::string& resume_path, int threads,
                   std::ostream* console) {
  config.encoder.validate();
  config.sampler.validate();
  config.trainer.validate();

  std::vector<Dataset> datasets = load_datasets(config.train_paths);
  const size_t total_steps = count_steps(datasets, config.sampler, config.trainer.epochs);
  if (total_steps <= config.trainer.warmup_steps) {
    throw ValidationError("train: run has " + std::to_string(total_steps) +
                          " steps, which does not exceed warmup_steps " +
                          std::to_string(config.trainer.warmup_steps));
  }

  EncoderParams params;
  size_t start_step = 0;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    if (!ck.has_optimizer) {
      throw ValidationError("resume: checkpoint " + resume_path + " lacks optimizer state");
    }
    if (ck.config.buckets != config.encoder.buckets || ck.config.dim != config.encoder.dim ||
        ck.config.max_tokens != config.encoder.max_tokens ||
        ck.config.seed != config.encoder.seed) {
      throw ValidationError("resume: checkpoint encoder config mismatches run config");
    }
    params = std::move(ck.params);
    start_step = static_cast<size_t>(params.step);
    if (start_step > total_steps) {
      throw ValidationError("resume: checkpoint step exceeds total run steps");
    }
  } else {
    params = init_params(config.encoder);
  }

  fs::create_directories(config.output.checkpoint_dir);
  std::ofstream metrics(config.output.metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + config.output.metrics_path);
  std::ofstream trace;
  if (!config.output.trace_path.empty()) {
    trace.open(config.output.trace_path, std::ios::binary | std::ios::trunc);
    if (!trace) throw IoError("cannot write " + config.output.trace_path);
  }

  MultitaskSampler sampler(datasets, config.sampler, config.trainer.epochs);

  TrainSummary summary;
  summary.total_steps = total_steps;

  while (auto mini = sampler.next_mini_batch()) {
    // Resume replays the sampler draws for already-trained steps so the RNG
    // streams line up with the uninterrupted run.
    if (mini->step <= start_step) continue;

    std::vector<ResolvedMicroBatch> resolved;
    resolved.reserve(mini->micros.size());
    for (const MicroBatch& micro : mini->micros) {
      ResolvedMicroBatch r;
      r.source = micro.source;
      r.epoch = micro.epoch;
      for (size_t idx : micro.sample_indices) {
        r.samples.push_back(&datasets[micro.dataset].samples[idx]);
      }
      r.negative_subsets = micro.negative_subsets;
      resolved.push_back(std::move(r));
      if (trace.is_open()) append_trace(trace, mini->step, micro);
    }

    const double lr = lr_schedule(mini->step, config.trainer, total_steps);
    StepReport report = train_step(resolved, params, config.encoder, config.trainer, lr, threads);
    report.step = mini->step;
    report.epoch = mini->micros.front().epoch;

    metrics << step_report_json(report).dump() << '\n';
    if (console) {
      (*console) << "step " << report.step << "/" << total_steps << " epoch " << report.epoch
                 << " lr " << report.lr << " loss " << report.loss << " (hard " << report.loss_hard
                 << ", in-batch "
                 << (report.loss_in_batch ? std::to_string(*report.loss_in_batch) : "n/a")
                 << ") grad_norm " << report.grad_norm << " [" << report.wall_ms << " ms]\n";
    }

    if (summary.steps_run == 0) summary.first_loss = report.loss;
    summary.final_loss = report.loss;
    ++summary.steps_run;

    if (config.output.checkpoint_interval > 0 &&
        mini->step % config.output.checkpoint_interval == 0 && mini->step < total_steps) {
      const std::string path = (fs::path(config.output.checkpoint_dir) /
                                ("checkpoint-" + std::to_string(mini->step) + ".embk"))
                                   .string();
      save_checkpoint(path, params, config.encoder, true);
    }
  }

  const std::string final_path =
      (fs::path(config.output.checkpoint_dir) / "final.embk").string();
  save_checkpoint(final_path, params, config.encoder, true);
  summary.final_checkpoint = final_path;

  if (!metrics) throw IoError("write failed: " + config.output.metrics_path);
  return summary;
}

}  // namespace embkit
