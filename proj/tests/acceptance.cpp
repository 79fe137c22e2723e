// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code = number of
// failures.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "embkit/adapters.hpp"
#include "embkit/encoder.hpp"
#include "embkit/evalkit.hpp"
#include "embkit/miner.hpp"
#include "embkit/objective.hpp"
#include "embkit/samples_io.hpp"
#include "embkit/sampler.hpp"
#include "embkit/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace embkit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: analytic gradients of the combined loss through
//    the encoder vs central finite differences, eps = 1e-4, rel err < 1e-4,
//    >= 100 random cases at D = 16, under 30 s.
// ---------------------------------------------------------------------------
void check_gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240816);

  size_t cases = 0, coords = 0;
  while (cases < 100) {
    EncoderConfig enc;
    enc.buckets = 64 + rng() % 128;
    enc.dim = 16;
    enc.seed = rng();
    EncoderParams params = init_params(enc);
    TrainConfig cfg;
    cfg.temperature = 0.05;

    auto text = [&rng] {
      std::mt19937_64& r = rng;
      std::string t;
      const size_t words = 2 + r() % 6;
      for (size_t w = 0; w < words; ++w) t += fixtures::synth_word(r) + " ";
      return t;
    };
    std::vector<TrainingSample> samples(3);
    for (size_t i = 0; i < 3; ++i) {
      samples[i].source = "g";
      samples[i].task = i < 2 ? TaskType::Retrieval : TaskType::Clustering;
      samples[i].instruction = "Retrieve semantically similar text.";
      samples[i].query = text();
      samples[i].positive = text();
      for (size_t k = 0; k < 24; ++k) samples[i].negatives.push_back(text());
    }
    ResolvedMicroBatch micro;
    micro.source = "g";
    for (auto& s : samples) micro.samples.push_back(&s);
    micro.negative_subsets = {{0, 1}, {2, 3}, {4, 5}};
    const std::vector<ResolvedMicroBatch> mini = {micro};

    const LossAndGrads analytic = compute_loss_and_grads(mini, params, enc, cfg);
    auto loss_at = [&]() { return compute_loss_and_grads(mini, params, enc, cfg).loss; };

    // sample a few touched table coordinates and proj coordinates
    std::vector<std::pair<size_t, double>> probes;  // flat index -> analytic value
    {
      std::vector<std::pair<size_t, double>> touched;
      for (const auto& [bucket, row] : analytic.grads.table_rows) {
        for (uint32_t k = 0; k < enc.dim; ++k) {
          touched.push_back({static_cast<size_t>(bucket) * enc.dim + k, row[k]});
        }
      }
      for (int p = 0; p < 3; ++p) probes.push_back(touched[rng() % touched.size()]);
    }
    for (const auto& [index, value] : probes) {
      const double fd = oracle::fd_f32(params.table, index, 1e-4, loss_at);
      const double err = oracle::rel_err(value, fd);
      require(err < 1e-4, "table gradient rel err " + std::to_string(err) + " at case " +
                              std::to_string(cases));
      ++coords;
    }
    for (int p = 0; p < 2; ++p) {
      const size_t index = rng() % params.proj.size();
      const double fd = oracle::fd_f32(params.proj, index, 1e-4, loss_at);
      const double err = oracle::rel_err(analytic.grads.proj[index], fd);
      require(err < 1e-4, "proj gradient rel err " + std::to_string(err) + " at case " +
                              std::to_string(cases));
      ++coords;
    }
    ++cases;
  }
  const double secs = elapsed_s(start);
  require(secs < 30.0, "gradient check took " + std::to_string(secs) + " s (limit 30)");
  std::cout << "    " << cases << " cases, " << coords << " coordinates, " << secs << " s\n";
}

// ---------------------------------------------------------------------------
// 2. Loss identities.
// ---------------------------------------------------------------------------
void check_loss_identities() {
  for (size_t n : {size_t{1}, size_t{7}, size_t{24}}) {
    SimilarityRow row{0.37, std::vector<double>(n, 0.37), 0.05};
    const double loss = hard_negative_loss(row).loss;
    require(std::fabs(loss - std::log(static_cast<double>(n) + 1.0)) <= 1e-12,
            "hard loss != ln(n+1) for n=" + std::to_string(n));
  }
  BatchScores one(1);
  one.at(0, 0) = 0.9;
  require(in_batch_loss(one, 0, 0.05).loss == 0.0, "in-batch loss for B=1 is not 0");

  for (size_t b : {size_t{4}, size_t{512}}) {
    BatchScores uniform(b);
    for (size_t i = 0; i < b; ++i) {
      for (size_t j = 0; j < b; ++j) uniform.at(i, j) = 0.21;
    }
    const double loss = in_batch_loss(uniform, b / 2, 0.05).loss;
    require(std::fabs(loss - std::log(static_cast<double>(b))) <= 1e-12,
            "uniform in-batch loss != ln(B) for B=" + std::to_string(b));
  }
}

// ---------------------------------------------------------------------------
// 3 + 4. Miner oracle equivalence and threshold fidelity on 50 randomized
//        fixtures (corpus <= 2000, D = 16), 100% identical, under 60 s.
// ---------------------------------------------------------------------------
void check_miner_oracle_and_thresholds() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(708090);
  size_t mined = 0, discarded = 0;
  for (int fixture = 0; fixture < 50; ++fixture) {
    const size_t n = 100 + rng() % 1901;  // up to 2000
    const EmbeddingMatrix corpus = fixtures::random_unit_matrix(n, 16, rng());
    std::mt19937_64 qrng(rng());
    const Embedding query = fixtures::random_unit_vector(qrng, 16);
    const double positive_score =
        0.2 + 0.75 * std::uniform_real_distribution<double>()(qrng);
    std::set<std::string> exclude;
    for (int e = 0; e < 5; ++e) exclude.insert(corpus.ids[qrng() % n]);

    MinerConfig cfg;  // stock defaults 100 / 5 / 0.8 / 0.95 / 24
    const MineOutcome got = mine(query, positive_score, corpus, cfg, exclude);
    const auto want = oracle::mine_bruteforce(query, positive_score, corpus, cfg, exclude);

    require(got.discarded == want.discarded,
            "fixture " + std::to_string(fixture) + ": discard flag mismatch");
    if (got.discarded) {
      require(got.discard_reason == want.reason,
              "fixture " + std::to_string(fixture) + ": discard reason mismatch");
      ++discarded;
      continue;
    }
    ++mined;
    require(got.negatives.size() == want.ids.size() && got.negatives.size() == 24,
            "fixture " + std::to_string(fixture) + ": wrong negative count");
    for (size_t i = 0; i < 24; ++i) {
      require(got.negatives[i].id == want.ids[i],
              "fixture " + std::to_string(fixture) + ": order mismatch at " + std::to_string(i));
      require(got.negatives[i].score < cfg.abs_ceiling,
              "fixture " + std::to_string(fixture) + ": ceiling violated");
      require(got.negatives[i].score < cfg.rel_factor * positive_score,
              "fixture " + std::to_string(fixture) + ": relative margin violated");
    }
  }
  const double secs = elapsed_s(start);
  require(mined > 0, "no fixture produced negatives; fixture generator broken");
  require(secs < 60.0, "miner equivalence took " + std::to_string(secs) + " s (limit 60)");
  std::cout << "    50 fixtures (" << mined << " mined, " << discarded << " discarded), "
            << secs << " s\n";
}

// ---------------------------------------------------------------------------
// 5. Sampler epoch integrity on 1000/300/50 over 2 epochs, from the trace.
// ---------------------------------------------------------------------------
Dataset synthetic_dataset(const std::string& name, size_t size, TaskType task) {
  Dataset d;
  d.name = name;
  for (size_t i = 0; i < size; ++i) {
    TrainingSample s;
    s.source = name;
    s.task = task;
    s.instruction = "inst";
    s.query = name + std::to_string(i);
    s.positive = "pos";
    s.negatives.assign(negative_pool_size(task), "neg");
    for (size_t k = 0; k < s.negatives.size(); ++k) s.negatives[k] += std::to_string(k);
    d.samples.push_back(std::move(s));
  }
  return d;
}

void check_sampler_epoch_integrity() {
  const std::vector<Dataset> datasets = {
      synthetic_dataset("alpha", 1000, TaskType::Retrieval),
      synthetic_dataset("beta", 300, TaskType::Clustering),
      synthetic_dataset("gamma", 50, TaskType::Classification)};
  SamplerConfig cfg;
  cfg.micro_batch_size = 16;
  cfg.num_workers = 4;
  cfg.seed = 1234;

  std::ostringstream trace;
  MultitaskSampler sampler(datasets, cfg, 2);
  while (auto mini = sampler.next_mini_batch()) {
    for (const MicroBatch& m : mini->micros) append_trace(trace, mini->step, m);
  }

  std::map<std::pair<std::string, size_t>, size_t> counts;
  size_t first_pass_remaining = 1350;
  bool ordering_ok = true;
  std::istringstream lines(trace.str());
  std::string line;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    const std::string source = j.at("source").get<std::string>();
    const auto ids = j.at("sample_ids").get<std::vector<size_t>>();
    require(!ids.empty(), "empty micro batch in trace");
    require(j.at("negative_subset_indices").size() == ids.size(),
            "subset list misaligned in trace");
    for (size_t id : ids) {
      auto& c = counts[{source, id}];
      if (c == 1 && first_pass_remaining != 0) ordering_ok = false;
      if (c == 0) --first_pass_remaining;
      ++c;
    }
  }
  require(counts.size() == 1350, "expected 1350 distinct samples, saw " +
                                     std::to_string(counts.size()));
  for (const auto& [key, c] : counts) {
    require(c == 2, key.first + "/" + std::to_string(key.second) + " drawn " +
                        std::to_string(c) + " times");
  }
  require(ordering_ok, "a dataset started epoch 2 before epoch 1 finished everywhere");
}

// ---------------------------------------------------------------------------
// 6. Negative subsampling statistics: 7/24 +- 0.05 over 1000 draws of one
//    retrieval sample, via the sampler itself.
// ---------------------------------------------------------------------------
void check_negative_subsampling() {
  const std::vector<Dataset> datasets = {synthetic_dataset("one", 1, TaskType::Retrieval)};
  SamplerConfig cfg;
  cfg.micro_batch_size = 1;
  cfg.num_workers = 1;
  cfg.seed = 777;
  MultitaskSampler sampler(datasets, cfg, 1000);

  std::vector<size_t> hits(24, 0);
  size_t draws = 0;
  while (auto mini = sampler.next_mini_batch()) {
    for (const MicroBatch& m : mini->micros) {
      for (const auto& subset : m.negative_subsets) {
        require(subset.size() == 7, "subset size != 7");
        for (size_t idx : subset) hits[idx] += 1;
        ++draws;
      }
    }
  }
  require(draws == 1000, "expected 1000 draws, got " + std::to_string(draws));
  for (size_t k = 0; k < 24; ++k) {
    const double freq = static_cast<double>(hits[k]) / 1000.0;
    require(std::fabs(freq - 7.0 / 24.0) <= 0.05,
            "negative " + std::to_string(k) + " frequency " + std::to_string(freq));
  }
}

// ---------------------------------------------------------------------------
// 7. End-to-end toy training: 32 paraphrase clusters x 8, negatives mined
//    with the seed encoder, 2 epochs -> held-out recall@1 >= 0.9 and final
//    loss < 25% of step-1 loss, under 5 minutes single-threaded.
// ---------------------------------------------------------------------------
void check_toy_training(const fs::path& work) {
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = fixtures::make_paraphrase_corpus(32, 8, 2, 90210);

  EncoderConfig enc;  // desk defaults
  enc.seed = 42;
  const EncoderParams seed_params = init_params(enc);
  const EmbedFn teacher = [&](const std::string& t) { return encode(t, seed_params, enc); };

  std::vector<IdText> queries, passages;
  std::vector<std::pair<std::string, std::string>> relations;
  char buf[16];
  for (size_t i = 0; i < corpus.texts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "q%04zu", i);
    queries.push_back({buf, corpus.texts[i]});
    std::snprintf(buf, sizeof(buf), "d%04zu", i);
    passages.push_back({buf, corpus.texts[i]});
  }
  for (size_t i = 0; i < corpus.texts.size(); ++i) {
    for (size_t j = 0; j < corpus.texts.size(); ++j) {
      if (i != j && corpus.cluster_of[i] == corpus.cluster_of[j]) {
        char qb[16], db[16];
        std::snprintf(qb, sizeof(qb), "q%04zu", i);
        std::snprintf(db, sizeof(db), "d%04zu", j);
        relations.push_back({qb, db});
      }
    }
  }
  const AdaptResult mined = adapt_retrieval(queries, passages, relations, teacher, MinerConfig{},
                                            "Retrieve semantically similar text.",
                                            "toy-paraphrase", 7);
  require(mined.samples.size() >= 150,
          "mining kept only " + std::to_string(mined.samples.size()) + " of 256 queries");

  const std::string data = (work / "toy-paraphrase.jsonl").string();
  write_samples(mined.samples, data);

  // Desk worker count; the toy corpus is far too small for the desk-scale
  // batch and warmup (8 steps total), so the run config scales those down.
  RunConfig run;
  run.encoder = enc;
  run.sampler.micro_batch_size = 4;
  run.sampler.num_workers = 4;
  run.sampler.seed = 42;
  run.trainer.peak_lr = 0.05;
  run.trainer.warmup_steps = 5;
  run.trainer.epochs = 2;
  run.trainer.seed = 42;
  run.train_paths = {data};
  run.output.checkpoint_dir = (work / "toy-ckpt").string();
  run.output.metrics_path = (work / "toy-metrics.jsonl").string();

  const TrainSummary summary = train(run);
  require(summary.final_loss < 0.25 * summary.first_loss,
          "final loss " + std::to_string(summary.final_loss) + " not < 25% of first " +
              std::to_string(summary.first_loss));

  const Checkpoint trained = load_checkpoint(summary.final_checkpoint);
  const EmbedFn model = [&](const std::string& t) {
    return encode(t, trained.params, trained.config);
  };

  std::vector<IdText> heldout_queries;
  std::map<std::string, std::map<std::string, double>> qrels;
  for (size_t i = 0; i < corpus.heldout.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "h%04zu", i);
    heldout_queries.push_back({buf, corpus.heldout[i]});
    for (size_t j = 0; j < corpus.texts.size(); ++j) {
      if (corpus.cluster_of[j] == corpus.heldout_cluster[i]) {
        char db[16];
        std::snprintf(db, sizeof(db), "d%04zu", j);
        qrels[buf][db] = 1.0;
      }
    }
  }
  const RetrievalEvalResult eval = eval_retrieval(
      heldout_queries, passages, qrels, "Retrieve semantically similar text.", model);
  require(eval.recall_at_1 >= 0.9,
          "held-out recall@1 " + std::to_string(eval.recall_at_1) + " < 0.9");

  const double secs = elapsed_s(start);
  require(secs < 300.0, "toy training took " + std::to_string(secs) + " s (limit 300)");
  std::cout << "    " << mined.samples.size() << " mined samples, " << summary.total_steps
            << " steps, recall@1 " << eval.recall_at_1 << ", loss " << summary.first_loss
            << " -> " << summary.final_loss << ", " << secs << " s\n";
}

// ---------------------------------------------------------------------------
// 8. Binary classification construction trains to accuracy >= 0.9 on a
//    linearly separable synthetic sentiment set within 2 epochs.
// ---------------------------------------------------------------------------
void check_classification_training(const fs::path& work) {
  const auto records = fixtures::make_sentiment_records(512, 5150);
  const AdaptResult adapted =
      adapt_binary_classification(records, "Classify the sentiment of the given review.",
                                  "toy-sentiment");
  require(adapted.samples.size() == 512, "adapter dropped records");

  const std::string data = (work / "toy-sentiment.jsonl").string();
  write_samples(adapted.samples, data);

  RunConfig run;
  run.encoder.seed = 42;
  run.sampler.micro_batch_size = 8;
  run.sampler.num_workers = 4;
  run.sampler.seed = 42;
  run.trainer.peak_lr = 0.1;
  run.trainer.warmup_steps = 2;
  run.trainer.epochs = 2;
  run.trainer.seed = 42;
  run.train_paths = {data};
  run.output.checkpoint_dir = (work / "sent-ckpt").string();
  run.output.metrics_path = (work / "sent-metrics.jsonl").string();

  const TrainSummary summary = train(run);
  const Checkpoint trained = load_checkpoint(summary.final_checkpoint);
  const double accuracy = eval_classification(
      records, "Classify the sentiment of the given review.",
      [&](const std::string& t) { return encode(t, trained.params, trained.config); });
  require(accuracy >= 0.9, "accuracy " + std::to_string(accuracy) + " < 0.9");
  std::cout << "    accuracy " << accuracy << " after " << summary.total_steps << " steps\n";
}

// ---------------------------------------------------------------------------
// 9. Determinism: two cmd_train runs with the same config and seed produce
//    bit-identical checkpoints and metrics logs.
// ---------------------------------------------------------------------------
void check_cli_determinism(const fs::path& work) {
  const char* bin = std::getenv("EMBKIT_BIN");
  require(bin != nullptr, "EMBKIT_BIN not set");

  const auto corpus = fixtures::make_paraphrase_corpus(8, 8, 0, 31415);
  const auto samples = fixtures::make_paraphrase_training_samples(corpus, "det", 3);
  const std::string data = (work / "det.jsonl").string();
  write_samples(samples, data);

  auto run_once = [&](const std::string& tag) {
    json cfg;
    cfg["encoder"] = {{"buckets", 4096}, {"dim", 32}, {"max_tokens", 64}, {"seed", 9}};
    cfg["sampler"] = {{"micro_batch_size", 8}, {"num_workers", 2}, {"negatives_per_step", 7},
                      {"seed", 9}};
    cfg["trainer"] = {{"peak_lr", 0.3}, {"warmup_steps", 1}, {"epochs", 2}, {"seed", 9}};
    cfg["data"] = {{"train", {data}}};
    cfg["output"] = {{"checkpoint_dir", (work / tag / "ckpt").string()},
                     {"metrics", (work / tag / "metrics.jsonl").string()}};
    const std::string cfg_path = (work / (tag + ".json")).string();
    std::ofstream(cfg_path) << cfg.dump(2);
    const std::string cmd = std::string(bin) + " train --config " + cfg_path + " > " +
                            (work / (tag + ".log")).string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    require(WIFEXITED(rc) && WEXITSTATUS(rc) == 0, "cmd_train run " + tag + " failed");
  };
  run_once("run-a");
  run_once("run-b");

  const std::string ck_a = read_file((work / "run-a" / "ckpt" / "final.embk").string());
  const std::string ck_b = read_file((work / "run-b" / "ckpt" / "final.embk").string());
  require(!ck_a.empty() && ck_a == ck_b, "final checkpoints differ between identical runs");
  const std::string m_a = read_file((work / "run-a" / "metrics.jsonl").string());
  const std::string m_b = read_file((work / "run-b" / "metrics.jsonl").string());
  require(!m_a.empty() && m_a == m_b, "metrics logs differ between identical runs");
}

// ---------------------------------------------------------------------------
// 10. Schedule checks.
// ---------------------------------------------------------------------------
void check_schedule() {
  TrainConfig cfg;
  cfg.peak_lr = 3e-4;
  cfg.warmup_steps = 500;
  const size_t total = 2500;
  require(lr_schedule(cfg.warmup_steps, cfg, total) == cfg.peak_lr, "lr(warmup) != peak");
  require(lr_schedule(total, cfg, total) == 0.0, "lr(total) != 0");
  const double mid = lr_schedule(cfg.warmup_steps + (total - cfg.warmup_steps) / 2, cfg, total);
  require(std::fabs(mid - cfg.peak_lr / 2.0) <= 1e-12, "lr(midpoint) != peak/2 within 1e-12");
}

}  // namespace

int main() {
  const fs::path work = fixtures::fresh_temp_dir("acceptance");
  struct Criterion {
    const char* name;
    std::function<void()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient-correctness", [] { check_gradient_correctness(); }},
      {"loss-identities", [] { check_loss_identities(); }},
      {"miner-oracle-equivalence", [] { check_miner_oracle_and_thresholds(); }},
      {"threshold-fidelity", [] { check_miner_oracle_and_thresholds(); }},
      {"sampler-epoch-integrity", [] { check_sampler_epoch_integrity(); }},
      {"negative-subsampling-statistics", [] { check_negative_subsampling(); }},
      {"end-to-end-toy-training", [&] { check_toy_training(work); }},
      {"classification-construction", [&] { check_classification_training(work); }},
      {"determinism", [&] { check_cli_determinism(work); }},
      {"schedule-checks", [] { check_schedule(); }},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    try {
      c.run();
      std::cout << "PASS " << c.name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "FAIL " << c.name << ": " << e.what() << "\n";
    }
  }
  fs::remove_all(work);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << "\n";
  return failures;
}
