#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "embkit/adapters.hpp"
#include "embkit/encoder.hpp"
#include "embkit/errors.hpp"
#include "embkit/evalkit.hpp"
#include "embkit/manifest.hpp"
#include "embkit/miner.hpp"
#include "embkit/parallel.hpp"
#include "embkit/samples_io.hpp"
#include "embkit/sampler.hpp"
#include "embkit/trainer.hpp"
#include "embkit/version.hpp"
#include "jsonl_inputs.hpp"

namespace {

using nlohmann::json;
using namespace embkit;

EmbedFn embed_from_checkpoint(const std::string& path) {
  auto ck = std::make_shared<Checkpoint>(load_checkpoint(path));
  return [ck](const std::string& text) { return encode(text, ck->params, ck->config); };
}

void write_json_atomic(const std::string& path, const json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

json result_report(const AdaptResult& result) {
  json discards = json::array();
  for (const DiscardRecord& d : result.discards) {
    discards.push_back({{"query_id", d.query_id}, {"reason", d.reason}});
  }
  return json{{"attempted", result.attempted},
              {"emitted", result.samples.size()},
              {"discarded", result.discards.size()},
              {"discards", std::move(discards)},
              {"clamped_top_k", result.clamped_top_k}};
}

// Query/corpus vectors either from a precomputed matrix file or by encoding
// with a toolkit checkpoint.
struct VectorSource {
  std::string matrix_path;
  std::string checkpoint_path;

  std::vector<Embedding> vectors_for(const std::vector<IdText>& items) const {
    std::vector<Embedding> out(items.size());
    if (!matrix_path.empty()) {
      const EmbeddingMatrix m = load_matrix(matrix_path);
      std::unordered_map<std::string, size_t> row;
      for (size_t i = 0; i < m.rows(); ++i) row.emplace(m.ids[i], i);
      for (size_t i = 0; i < items.size(); ++i) {
        auto it = row.find(items[i].id);
        if (it == row.end()) {
          throw ValidationError(matrix_path + ": no vector for id \"" + items[i].id + "\"");
        }
        auto span = m.row(it->second);
        out[i].assign(span.begin(), span.end());
      }
      return out;
    }
    const EmbedFn embed = embed_from_checkpoint(checkpoint_path);
    for (size_t i = 0; i < items.size(); ++i) out[i] = embed(items[i].text);
    return out;
  }
};

struct MinerFlags {
  MinerConfig config;

  void attach(CLI::App* cmd) {
    cmd->add_option("--top-k", config.top_k, "candidate pool depth")
        ->capture_default_str();
    cmd->add_option("--exclude-top", config.exclude_top,
                    "highest-ranked candidates dropped as likely false negatives")
        ->capture_default_str();
    cmd->add_option("--abs-ceiling", config.abs_ceiling, "absolute score ceiling for negatives")
        ->capture_default_str();
    cmd->add_option("--rel-factor", config.rel_factor,
                    "negatives must score below rel-factor * positive score")
        ->capture_default_str();
    cmd->add_option("--keep", config.keep, "negatives kept per query")
        ->capture_default_str();
  }

  json to_json() const {
    return json{{"top_k", config.top_k},
                {"exclude_top", config.exclude_top},
                {"abs_ceiling", config.abs_ceiling},
                {"rel_factor", config.rel_factor},
                {"keep", config.keep}};
  }
};

int run_app(int argc, char** argv) {
  CLI::App app{"embkit: contrastive text-embedding training toolkit"};
  app.set_version_flag("--version", EMBKIT_VERSION);
  app.require_subcommand(1);

  // ---- convert ----
  auto* convert = app.add_subcommand(
      "convert", "convert raw task-family records into unified training samples");
  struct {
    std::string family, in, queries, corpus, relations, checkpoint;
    std::string out, report, manifest;
    std::string instruction, source;
    uint64_t seed = 42;
    size_t num_negatives = 24;
    int threads = default_thread_count();
    MinerFlags miner;
  } cv;
  convert->add_option("--family", cv.family, "nli|sts|dup|retrieval|binary|multiclass")
      ->required()
      ->check(CLI::IsMember({"nli", "sts", "dup", "retrieval", "binary", "multiclass"}));
  convert->add_option("--in", cv.in, "input records JSONL (non-retrieval families)");
  convert->add_option("--queries", cv.queries, "queries JSONL (retrieval family)");
  convert->add_option("--corpus", cv.corpus, "corpus JSONL (retrieval family)");
  convert->add_option("--relations", cv.relations, "relations JSONL (retrieval family)");
  convert->add_option("--checkpoint", cv.checkpoint, "teacher checkpoint for mining families");
  convert->add_option("--out", cv.out, "output samples JSONL")->required();
  convert->add_option("--report", cv.report, "conversion report JSON");
  convert->add_option("--manifest", cv.manifest, "run manifest path (default <out>.manifest.json)");
  convert->add_option("--instruction", cv.instruction, "task instruction for the samples")
      ->required();
  convert->add_option("--source", cv.source, "dataset source name")->required();
  convert->add_option("--seed", cv.seed, "sampling seed")->capture_default_str();
  convert->add_option("--num-negatives", cv.num_negatives, "negative pool size (multiclass)")
      ->capture_default_str();
  convert->add_option("--threads", cv.threads, "worker thread cap");
  cv.miner.attach(convert);

  convert->callback([&] {
    std::vector<std::string> inputs;
    AdaptResult result;
    const bool mining_family =
        cv.family == "nli" || cv.family == "sts" || cv.family == "dup" || cv.family == "retrieval";
    if (mining_family && cv.checkpoint.empty()) {
      throw ValidationError("convert: --family " + cv.family + " requires --checkpoint");
    }
    if (cv.family == "retrieval") {
      if (cv.queries.empty() || cv.corpus.empty() || cv.relations.empty()) {
        throw ValidationError("convert: retrieval family requires --queries, --corpus, --relations");
      }
      inputs = {cv.queries, cv.corpus, cv.relations};
      result = adapt_retrieval(cli::read_id_text(cv.queries), cli::read_id_text(cv.corpus),
                               cli::read_relations(cv.relations),
                               embed_from_checkpoint(cv.checkpoint), cv.miner.config,
                               cv.instruction, cv.source, cv.seed, cv.threads);
    } else {
      if (cv.in.empty()) throw ValidationError("convert: --in is required for this family");
      inputs = {cv.in};
      if (cv.family == "nli") {
        result = adapt_nli(cli::read_nli(cv.in), embed_from_checkpoint(cv.checkpoint),
                           cv.miner.config, cv.instruction, cv.source, cv.seed, cv.threads);
      } else if (cv.family == "sts") {
        result = adapt_sts(cli::read_sts(cv.in), embed_from_checkpoint(cv.checkpoint),
                           cv.miner.config, cv.instruction, cv.source, cv.seed, cv.threads);
      } else if (cv.family == "dup") {
        result = adapt_duplicates(cli::read_duplicates(cv.in), embed_from_checkpoint(cv.checkpoint),
                                  cv.miner.config, cv.instruction, cv.source, cv.seed, cv.threads);
      } else if (cv.family == "binary") {
        result = adapt_binary_classification(cli::read_labeled(cv.in), cv.instruction, cv.source);
      } else {
        result = adapt_multiclass(cli::read_labeled(cv.in), cv.instruction, cv.source, cv.seed,
                                  cv.num_negatives);
      }
    }
    write_samples(result.samples, cv.out);
    if (!cv.report.empty()) write_json_atomic(cv.report, result_report(result));

    json cfg{{"family", cv.family}, {"instruction", cv.instruction}, {"source", cv.source},
             {"seed", cv.seed},     {"out", cv.out},                 {"miner", cv.miner.to_json()}};
    if (!cv.checkpoint.empty()) inputs.push_back(cv.checkpoint);
    const std::string manifest_path = cv.manifest.empty() ? cv.out + ".manifest.json" : cv.manifest;
    write_manifest(manifest_path, make_manifest("convert", cfg.dump(), inputs, cv.seed));

    std::cout << "convert: " << result.samples.size() << " samples emitted, "
              << result.discards.size() << " discarded -> " << cv.out << "\n";
  });

  // ---- mine ----
  auto* mine_cmd = app.add_subcommand("mine", "mine hard negatives for query-passage data");
  struct {
    std::string queries, corpus, relations;
    std::string query_vectors, corpus_vectors, checkpoint;
    std::string out, report, manifest;
    std::string instruction = "Given a question, retrieve passages that answer the question.";
    std::string source = "mined";
    uint64_t seed = 42;
    int threads = default_thread_count();
    MinerFlags miner;
  } mn;
  mine_cmd->add_option("--queries", mn.queries, "queries JSONL {id, text}")->required();
  mine_cmd->add_option("--corpus", mn.corpus, "corpus JSONL {id, text}")->required();
  mine_cmd->add_option("--relations", mn.relations, "relations JSONL {query_id, doc_id}")
      ->required();
  mine_cmd->add_option("--query-vectors", mn.query_vectors,
                       "precomputed query vectors (matrix file or JSONL)");
  mine_cmd->add_option("--corpus-vectors", mn.corpus_vectors,
                       "precomputed corpus vectors (matrix file or JSONL)");
  mine_cmd->add_option("--checkpoint", mn.checkpoint,
                       "encoder checkpoint used when vectors are not precomputed");
  mine_cmd->add_option("--out", mn.out, "output samples JSONL")->required();
  mine_cmd->add_option("--report", mn.report, "discard report JSON");
  mine_cmd->add_option("--manifest", mn.manifest, "run manifest path");
  mine_cmd->add_option("--instruction", mn.instruction, "instruction for emitted samples")
      ->capture_default_str();
  mine_cmd->add_option("--source", mn.source, "source name for emitted samples")
      ->capture_default_str();
  mine_cmd->add_option("--seed", mn.seed, "positive-sampling seed")->capture_default_str();
  mine_cmd->add_option("--threads", mn.threads, "worker thread cap");
  mn.miner.attach(mine_cmd);

  mine_cmd->callback([&] {
    const std::vector<IdText> queries = cli::read_id_text(mn.queries);
    const std::vector<IdText> corpus = cli::read_id_text(mn.corpus);
    if (corpus.empty()) throw ValidationError("mine: corpus is empty");
    if (queries.empty()) throw ValidationError("mine: no queries");
    if ((mn.query_vectors.empty() || mn.corpus_vectors.empty()) && mn.checkpoint.empty()) {
      throw ValidationError(
          "mine: supply --query-vectors/--corpus-vectors or --checkpoint for embedding");
    }

    VectorSource qsrc{mn.query_vectors, mn.checkpoint};
    VectorSource csrc{mn.corpus_vectors, mn.checkpoint};
    const std::vector<Embedding> qvecs = qsrc.vectors_for(queries);
    const std::vector<Embedding> cvecs = csrc.vectors_for(corpus);

    std::vector<std::string> cids, ctexts;
    for (const IdText& p : corpus) {
      cids.push_back(p.id);
      ctexts.push_back(p.text);
    }
    const EmbeddingMatrix matrix = EmbeddingMatrix::from_rows(cids, cvecs);

    std::vector<MiningQuery> mqs(queries.size());
    for (size_t i = 0; i < queries.size(); ++i) {
      mqs[i] = {queries[i].id, queries[i].text, qvecs[i]};
    }
    std::map<std::string, std::vector<std::string>> rel_map;
    for (const auto& [qid, did] : cli::read_relations(mn.relations)) {
      rel_map[qid].push_back(did);
    }

    MineDatasetResult mined = mine_dataset(mqs, matrix, ctexts, rel_map, mn.miner.config,
                                           mn.instruction, mn.source, mn.seed, mn.threads);
    write_samples(mined.samples, mn.out);

    if (!mn.report.empty()) {
      json discards = json::array();
      for (const DiscardRecord& d : mined.discards) {
        discards.push_back({{"query_id", d.query_id}, {"reason", d.reason}});
      }
      write_json_atomic(mn.report, json{{"queries", queries.size()},
                                        {"emitted", mined.samples.size()},
                                        {"discarded", mined.discards.size()},
                                        {"discards", std::move(discards)},
                                        {"clamped_top_k", mined.clamped_top_k}});
    }

    std::vector<std::string> inputs{mn.queries, mn.corpus, mn.relations};
    if (!mn.query_vectors.empty()) inputs.push_back(mn.query_vectors);
    if (!mn.corpus_vectors.empty()) inputs.push_back(mn.corpus_vectors);
    if (!mn.checkpoint.empty()) inputs.push_back(mn.checkpoint);
    json cfg{{"instruction", mn.instruction},
             {"source", mn.source},
             {"seed", mn.seed},
             {"out", mn.out},
             {"miner", mn.miner.to_json()}};
    const std::string manifest_path = mn.manifest.empty() ? mn.out + ".manifest.json" : mn.manifest;
    write_manifest(manifest_path, make_manifest("mine", cfg.dump(), inputs, mn.seed));

    std::cout << "mine: " << mined.samples.size() << " samples emitted, "
              << mined.discards.size() << " discarded -> " << mn.out << "\n";
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "run the contrastive training loop");
  struct {
    std::string config, resume, dump_trace, manifest;
    int threads = default_thread_count();
  } tr;
  train_cmd->add_option("--config", tr.config, "run config JSON")->required();
  train_cmd->add_option("--resume", tr.resume, "checkpoint to resume from");
  train_cmd->add_option("--dump-trace", tr.dump_trace, "write the sampler trace JSONL here");
  train_cmd->add_option("--manifest", tr.manifest, "run manifest path");
  train_cmd->add_option("--threads", tr.threads, "worker thread cap");

  train_cmd->callback([&] {
    RunConfig cfg = load_run_config(tr.config);
    if (!tr.dump_trace.empty()) cfg.output.trace_path = tr.dump_trace;

    std::vector<std::string> inputs{tr.config};
    for (const std::string& p : cfg.train_paths) inputs.push_back(p);
    if (!tr.resume.empty()) inputs.push_back(tr.resume);
    std::filesystem::create_directories(cfg.output.checkpoint_dir);
    const std::string manifest_path =
        tr.manifest.empty()
            ? (std::filesystem::path(cfg.output.checkpoint_dir) / "manifest.json").string()
            : tr.manifest;
    write_manifest(manifest_path,
                   make_manifest("train", run_config_to_json(cfg), inputs, cfg.trainer.seed));

    const TrainSummary summary = train(cfg, tr.resume, tr.threads, &std::cout);
    std::cout << "train: " << summary.steps_run << " steps (total " << summary.total_steps
              << "), first loss " << summary.first_loss << ", final loss " << summary.final_loss
              << "\ncheckpoint: " << summary.final_checkpoint << "\n";
  });

  // ---- embed ----
  auto* embed_cmd = app.add_subcommand("embed", "embed texts with a checkpoint");
  struct {
    std::string checkpoint, input, out, format = "bin";
    int threads = default_thread_count();
  } em;
  embed_cmd->add_option("--checkpoint", em.checkpoint, "encoder checkpoint")->required();
  embed_cmd->add_option("--input", em.input, "texts JSONL {id, text}")->required();
  embed_cmd->add_option("--out", em.out, "output embedding matrix")->required();
  embed_cmd->add_option("--format", em.format, "bin|jsonl")
      ->check(CLI::IsMember({"bin", "jsonl"}))
      ->capture_default_str();
  embed_cmd->add_option("--threads", em.threads, "worker thread cap");

  embed_cmd->callback([&] {
    const std::vector<IdText> items = cli::read_id_text(em.input);
    auto ck = std::make_shared<Checkpoint>(load_checkpoint(em.checkpoint));
    std::vector<Embedding> rows(items.size());
    parallel_for(items.size(), em.threads,
                 [&](size_t i) { rows[i] = encode(items[i].text, ck->params, ck->config); });
    std::vector<std::string> ids;
    for (const IdText& it : items) ids.push_back(it.id);
    save_matrix(em.out, EmbeddingMatrix::from_rows(std::move(ids), rows), em.format == "jsonl");
    std::cout << "embed: " << items.size() << " vectors -> " << em.out << "\n";
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a task bundle");
  struct {
    std::string checkpoint, task, out;
    uint64_t seed = 42;
    int threads = default_thread_count();
  } ev;
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "encoder checkpoint")->required();
  eval_cmd->add_option("--task", ev.task, "task bundle directory")->required();
  eval_cmd->add_option("--out", ev.out, "metric report JSON");
  eval_cmd->add_option("--seed", ev.seed, "clustering seed")->capture_default_str();
  eval_cmd->add_option("--threads", ev.threads, "worker thread cap");

  eval_cmd->callback([&] {
    const EvalBundle bundle = load_eval_bundle(ev.task);
    const std::vector<MetricReport> reports =
        run_eval(bundle, embed_from_checkpoint(ev.checkpoint), ev.seed, ev.threads);
    std::cout << format_report_table(reports);
    if (!ev.out.empty()) {
      json metrics = json::array();
      for (const MetricReport& r : reports) {
        metrics.push_back({{"task", r.task}, {"metric", r.metric}, {"value", r.value}});
      }
      write_json_atomic(ev.out, json{{"task", bundle.name},
                                     {"kind", to_string(bundle.kind)},
                                     {"metrics", std::move(metrics)}});
    }
  });

  // ---- trace ----
  auto* trace_cmd =
      app.add_subcommand("trace", "dump the sampler schedule for a run config without training");
  struct {
    std::string config, out;
  } tc;
  trace_cmd->add_option("--config", tc.config, "run config JSON")->required();
  trace_cmd->add_option("--out", tc.out, "trace JSONL output")->required();

  trace_cmd->callback([&] {
    const RunConfig cfg = load_run_config(tc.config);
    const std::vector<Dataset> datasets = load_datasets(cfg.train_paths);
    MultitaskSampler sampler(datasets, cfg.sampler, cfg.trainer.epochs);
    const std::string tmp = tc.out + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp);
      while (auto mini = sampler.next_mini_batch()) {
        for (const MicroBatch& micro : mini->micros) append_trace(out, mini->step, micro);
      }
      if (!out) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, tc.out);
    std::cout << "trace: " << sampler.steps_emitted() << " steps -> " << tc.out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const embkit::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
