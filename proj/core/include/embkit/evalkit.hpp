#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embkit/adapters.hpp"
#include "embkit/types.hpp"

namespace embkit {

enum class EvalKind { Retrieval, STS, Classification, Clustering };
const char* to_string(EvalKind kind);
EvalKind parse_eval_kind(const std::string& name);

struct MetricReport {
  std::string task;
  std::string metric;
  double value = 0.0;
};

struct RetrievalEvalResult {
  double ndcg_at_10 = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_10 = 0.0;
  size_t evaluated_queries = 0;
  std::vector<std::string> skipped_queries;  // no relevant docs in qrels
};

// qrels: query id -> (doc id -> relevance grade). Queries are embedded with
// the instruction applied; passages raw. Ranking is exact, ties broken by
// ascending doc id. nDCG@10 uses graded gains when grades are present,
// binary otherwise, with log2 discounts; recall@k divides by min(k, number
// of relevant docs).
RetrievalEvalResult eval_retrieval(const std::vector<IdText>& queries,
                                   const std::vector<IdText>& corpus,
                                   const std::map<std::string, std::map<std::string, double>>& qrels,
                                   const std::string& instruction, const EmbedFn& embed,
                                   int threads = 1);

// Spearman rank correlation (average ranks on ties) between cosine
// similarities and gold scores. Both sentences are embedded with the
// instruction applied (symmetric task). Constant predictions or gold ->
// ValidationError, not 0.
double eval_sts(const std::vector<StsRecord>& pairs, const std::string& instruction,
                const EmbedFn& embed, int threads = 1);

// Nearest-label-embedding accuracy over an explicit label set; ties broken
// by ascending label id. The overload without label_texts derives the set
// from the records.
double eval_classification(const std::vector<LabeledRecord>& records,
                           const std::vector<std::pair<int64_t, std::string>>& label_texts,
                           const std::string& instruction, const EmbedFn& embed,
                           int threads = 1);
double eval_classification(const std::vector<LabeledRecord>& records,
                           const std::string& instruction, const EmbedFn& embed,
                           int threads = 1);

struct ClusteringEvalResult {
  double v_measure = 0.0;
  double homogeneity = 0.0;
  double completeness = 0.0;
};

// Seeded k-means (k = number of gold classes, 10 restarts, best inertia)
// followed by V-measure against the gold labels.
ClusteringEvalResult eval_clustering(const std::vector<LabeledRecord>& records,
                                     const std::string& instruction, const EmbedFn& embed,
                                     uint64_t seed, int threads = 1);

// --- building blocks, exposed for testing ---

double spearman(const std::vector<double>& a, const std::vector<double>& b);

ClusteringEvalResult v_measure(const std::vector<int64_t>& gold,
                               const std::vector<size_t>& predicted);

// Lloyd k-means on row vectors with Forgy init from distinct points;
// restarts pick the run with the lowest inertia (ties: lowest restart).
std::vector<size_t> kmeans(const std::vector<Embedding>& points, size_t k, uint64_t seed,
                           size_t restarts = 10, size_t max_iters = 100);

// --- task bundles ---

// Directory layout: task.json {"kind", "name", "instruction"} plus payload
// JSONL per kind: retrieval -> queries.jsonl / corpus.jsonl / qrels.jsonl;
// sts -> pairs.jsonl; classification & clustering -> records.jsonl.
struct EvalBundle {
  EvalKind kind = EvalKind::Retrieval;
  std::string name;
  std::string instruction;
  std::vector<IdText> queries;
  std::vector<IdText> corpus;
  std::map<std::string, std::map<std::string, double>> qrels;
  std::vector<StsRecord> sts_pairs;
  std::vector<LabeledRecord> records;
};

EvalBundle load_eval_bundle(const std::string& dir);

std::vector<MetricReport> run_eval(const EvalBundle& bundle, const EmbedFn& embed,
                                   uint64_t seed, int threads = 1);

// Aligned plain-text table of metric rows.
std::string format_report_table(const std::vector<MetricReport>& reports);

}  // namespace embkit
