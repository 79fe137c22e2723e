#include "embkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"
#include "embkit/parallel.hpp"
#include "embkit/rng.hpp"
#include "embkit/similarity.hpp"

namespace embkit {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(EvalKind kind) {
  switch (kind) {
    case EvalKind::Retrieval:
      return "retrieval";
    case EvalKind::STS:
      return "sts";
    case EvalKind::Classification:
      return "classification";
    case EvalKind::Clustering:
      return "clustering";
  }
  return "retrieval";
}

EvalKind parse_eval_kind(const std::string& name) {
  if (name == "retrieval") return EvalKind::Retrieval;
  if (name == "sts") return EvalKind::STS;
  if (name == "classification") return EvalKind::Classification;
  if (name == "clustering") return EvalKind::Clustering;
  throw ValidationError("unknown eval task kind: \"" + name + "\"");
}

namespace {

std::vector<Embedding> embed_all(const std::vector<std::string>& texts, const EmbedFn& embed,
                                 int threads) {
  std::vector<Embedding> out(texts.size());
  parallel_for(texts.size(), threads, [&](size_t i) { out[i] = embed(texts[i]); });
  return out;
}

}  // namespace

RetrievalEvalResult eval_retrieval(const std::vector<IdText>& queries,
                                   const std::vector<IdText>& corpus,
                                   const std::map<std::string, std::map<std::string, double>>& qrels,
                                   const std::string& instruction, const EmbedFn& embed,
                                   int threads) {
  std::unordered_map<std::string, size_t> doc_row;
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (!doc_row.emplace(corpus[i].id, i).second) {
      throw ValidationError("eval_retrieval: duplicate corpus id \"" + corpus[i].id + "\"");
    }
  }
  for (const auto& [qid, docs] : qrels) {
    for (const auto& [did, rel] : docs) {
      if (!doc_row.count(did)) {
        throw ValidationError("eval_retrieval: qrels reference unknown doc \"" + did + "\"");
      }
    }
  }

  std::vector<std::string> query_texts, doc_texts;
  for (const IdText& q : queries) query_texts.push_back(format_query(instruction, q.text));
  for (const IdText& d : corpus) doc_texts.push_back(d.text);
  const std::vector<Embedding> q_embs = embed_all(query_texts, embed, threads);
  const std::vector<Embedding> d_embs = embed_all(doc_texts, embed, threads);

  struct PerQuery {
    bool skipped = false;
    double ndcg = 0.0, r1 = 0.0, r10 = 0.0;
  };
  std::vector<PerQuery> per(queries.size());

  parallel_for(queries.size(), threads, [&](size_t qi) {
    auto rels_it = qrels.find(queries[qi].id);
    std::map<std::string, double> rels;  // positive-relevance entries only
    if (rels_it != qrels.end()) {
      for (const auto& [did, rel] : rels_it->second) {
        if (rel > 0.0) rels.emplace(did, rel);
      }
    }
    if (rels.empty()) {
      per[qi].skipped = true;
      return;
    }

    struct Hit {
      size_t row;
      double score;
    };
    std::vector<Hit> hits(corpus.size());
    for (size_t di = 0; di < corpus.size(); ++di) {
      hits[di] = {di, cosine(q_embs[qi], d_embs[di])};
    }
    std::sort(hits.begin(), hits.end(), [&](const Hit& a, const Hit& b) {
      if (a.score != b.score) return a.score > b.score;
      return corpus[a.row].id < corpus[b.row].id;
    });

    auto gain = [&](size_t rank) -> double {
      auto it = rels.find(corpus[hits[rank].row].id);
      return it == rels.end() ? 0.0 : it->second;
    };

    const size_t depth = std::min<size_t>(10, hits.size());
    double dcg = 0.0;
    size_t hit1 = 0, hit10 = 0;
    for (size_t r = 0; r < depth; ++r) {
      const double g = gain(r);
      dcg += g / std::log2(static_cast<double>(r) + 2.0);
      if (g > 0.0) {
        ++hit10;
        if (r == 0) ++hit1;
      }
    }
    std::vector<double> ideal;
    for (const auto& [did, rel] : rels) ideal.push_back(rel);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (size_t r = 0; r < std::min<size_t>(10, ideal.size()); ++r) {
      idcg += ideal[r] / std::log2(static_cast<double>(r) + 2.0);
    }
    per[qi].ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    per[qi].r1 = static_cast<double>(hit1) / static_cast<double>(std::min<size_t>(1, rels.size()));
    per[qi].r10 =
        static_cast<double>(hit10) / static_cast<double>(std::min<size_t>(10, rels.size()));
  });

  RetrievalEvalResult result;
  double ndcg = 0.0, r1 = 0.0, r10 = 0.0;
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    if (per[qi].skipped) {
      result.skipped_queries.push_back(queries[qi].id);
      continue;
    }
    ++result.evaluated_queries;
    ndcg += per[qi].ndcg;
    r1 += per[qi].r1;
    r10 += per[qi].r10;
  }
  if (result.evaluated_queries == 0) {
    throw ValidationError("eval_retrieval: no query has relevant documents");
  }
  const double n = static_cast<double>(result.evaluated_queries);
  result.ndcg_at_10 = ndcg / n;
  result.recall_at_1 = r1 / n;
  result.recall_at_10 = r10 / n;
  return result;
}

namespace {

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("spearman: length mismatch");
  if (a.size() < 3) throw ValidationError("spearman: need at least 3 pairs");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) {
    throw ValidationError("spearman: correlation undefined for constant inputs");
  }
  return cov / std::sqrt(va * vb);
}

double eval_sts(const std::vector<StsRecord>& pairs, const std::string& instruction,
                const EmbedFn& embed, int threads) {
  if (pairs.size() < 3) throw ValidationError("eval_sts: need at least 3 pairs");
  std::vector<std::string> texts;
  for (const StsRecord& p : pairs) {
    texts.push_back(format_query(instruction, p.sentence_a));
    texts.push_back(format_query(instruction, p.sentence_b));
  }
  const std::vector<Embedding> embs = embed_all(texts, embed, threads);
  std::vector<double> predicted(pairs.size()), gold(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    predicted[i] = cosine(embs[2 * i], embs[2 * i + 1]);
    gold[i] = pairs[i].score;
  }
  return spearman(predicted, gold);
}

double eval_classification(const std::vector<LabeledRecord>& records,
                           const std::vector<std::pair<int64_t, std::string>>& labels_in,
                           const std::string& instruction, const EmbedFn& embed, int threads) {
  if (records.empty()) throw ValidationError("eval_classification: no records");
  std::map<int64_t, std::string> labels(labels_in.begin(), labels_in.end());
  if (labels.size() < 2) throw ValidationError("eval_classification: need at least 2 labels");
  for (const LabeledRecord& r : records) {
    auto it = labels.find(r.label_id);
    if (it == labels.end()) {
      throw ValidationError("eval_classification: record label " + std::to_string(r.label_id) +
                            " missing from the label set");
    }
    if (!r.label_text.empty() && it->second != r.label_text) {
      throw ValidationError("eval_classification: inconsistent texts for label " +
                            std::to_string(r.label_id));
    }
  }
  std::vector<int64_t> label_ids;
  std::vector<std::string> label_texts;
  for (const auto& [id, text] : labels) {
    label_ids.push_back(id);
    label_texts.push_back(text);
  }
  for (size_t i = 0; i < label_texts.size(); ++i) {
    for (size_t j = i + 1; j < label_texts.size(); ++j) {
      if (label_texts[i] == label_texts[j]) {
        throw ValidationError("eval_classification: two labels share the text \"" +
                              label_texts[i] + "\"");
      }
    }
  }

  const std::vector<Embedding> label_embs = embed_all(label_texts, embed, threads);
  std::vector<std::string> query_texts;
  for (const LabeledRecord& r : records) query_texts.push_back(format_query(instruction, r.text));
  const std::vector<Embedding> query_embs = embed_all(query_texts, embed, threads);

  std::vector<char> correct(records.size(), 0);
  parallel_for(records.size(), threads, [&](size_t i) {
    size_t best = 0;
    double best_score = -2.0;
    for (size_t l = 0; l < label_embs.size(); ++l) {
      const double s = cosine(query_embs[i], label_embs[l]);
      if (s > best_score) {  // ties keep the lower label index
        best_score = s;
        best = l;
      }
    }
    correct[i] = label_ids[best] == records[i].label_id ? 1 : 0;
  });
  size_t hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double eval_classification(const std::vector<LabeledRecord>& records,
                           const std::string& instruction, const EmbedFn& embed, int threads) {
  std::map<int64_t, std::string> labels;
  for (const LabeledRecord& r : records) {
    auto it = labels.find(r.label_id);
    if (it == labels.end()) {
      labels.emplace(r.label_id, r.label_text);
    } else if (it->second != r.label_text) {
      throw ValidationError("eval_classification: inconsistent texts for label " +
                            std::to_string(r.label_id));
    }
  }
  return eval_classification(records, {labels.begin(), labels.end()}, instruction, embed,
                             threads);
}

std::vector<size_t> kmeans(const std::vector<Embedding>& points, size_t k, uint64_t seed,
                           size_t restarts, size_t max_iters) {
  if (points.size() < k) throw ValidationError("kmeans: fewer points than clusters");
  if (k == 0) throw ValidationError("kmeans: k must be >= 1");
  const size_t n = points.size();
  const size_t d = points[0].size();

  std::vector<size_t> best_assign;
  double best_inertia = std::numeric_limits<double>::infinity();

  for (size_t restart = 0; restart < restarts; ++restart) {
    Rng rng(derive_seed(seed, 0x6b6d65616e73ULL, restart));
    const std::vector<size_t> init = rng.distinct(n, k);
    std::vector<std::vector<double>> centroids(k, std::vector<double>(d, 0.0));
    for (size_t c = 0; c < k; ++c) {
      for (size_t j = 0; j < d; ++j) centroids[c][j] = points[init[c]][j];
    }

    std::vector<size_t> assign(n, 0);
    std::vector<double> dist(n, 0.0);
    for (size_t iter = 0; iter < max_iters; ++iter) {
      bool changed = false;
      for (size_t i = 0; i < n; ++i) {
        size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < k; ++c) {
          double dd = 0.0;
          for (size_t j = 0; j < d; ++j) {
            const double diff = points[i][j] - centroids[c][j];
            dd += diff * diff;
          }
          if (dd < best_d) {  // ties keep the lower centroid index
            best_d = dd;
            best = c;
          }
        }
        dist[i] = best_d;
        if (assign[i] != best || iter == 0) {
          if (assign[i] != best) changed = true;
          assign[i] = best;
        }
      }
      if (iter > 0 && !changed) break;

      std::vector<size_t> counts(k, 0);
      for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
      for (size_t i = 0; i < n; ++i) {
        ++counts[assign[i]];
        for (size_t j = 0; j < d; ++j) centroids[assign[i]][j] += points[i][j];
      }
      for (size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // Reseed an empty cluster with the point farthest from its centroid.
          size_t far = 0;
          for (size_t i = 1; i < n; ++i) {
            if (dist[i] > dist[far]) far = i;
          }
          for (size_t j = 0; j < d; ++j) centroids[c][j] = points[far][j];
          dist[far] = 0.0;
        } else {
          for (size_t j = 0; j < d; ++j) centroids[c][j] /= static_cast<double>(counts[c]);
        }
      }
    }

    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double dd = 0.0;
      for (size_t j = 0; j < d; ++j) {
        const double diff = points[i][j] - centroids[assign[i]][j];
        dd += diff * diff;
      }
      inertia += dd;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_assign = assign;
    }
  }
  return best_assign;
}

ClusteringEvalResult v_measure(const std::vector<int64_t>& gold,
                               const std::vector<size_t>& predicted) {
  if (gold.size() != predicted.size() || gold.empty()) {
    throw ValidationError("v_measure: label arrays empty or mismatched");
  }
  const double n = static_cast<double>(gold.size());

  std::map<int64_t, double> class_counts;
  std::map<size_t, double> cluster_counts;
  std::map<std::pair<int64_t, size_t>, double> joint;
  for (size_t i = 0; i < gold.size(); ++i) {
    class_counts[gold[i]] += 1.0;
    cluster_counts[predicted[i]] += 1.0;
    joint[{gold[i], predicted[i]}] += 1.0;
  }

  auto entropy = [&](const auto& counts) {
    double h = 0.0;
    for (const auto& [key, c] : counts) {
      const double p = c / n;
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  };
  const double h_class = entropy(class_counts);
  const double h_cluster = entropy(cluster_counts);

  double h_class_given_cluster = 0.0;
  double h_cluster_given_class = 0.0;
  for (const auto& [key, c] : joint) {
    const double p = c / n;
    h_class_given_cluster -= p * std::log(c / cluster_counts[key.second]);
    h_cluster_given_class -= p * std::log(c / class_counts[key.first]);
  }

  ClusteringEvalResult r;
  r.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
  r.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
  const double sum = r.homogeneity + r.completeness;
  r.v_measure = sum == 0.0 ? 0.0 : 2.0 * r.homogeneity * r.completeness / sum;
  return r;
}

ClusteringEvalResult eval_clustering(const std::vector<LabeledRecord>& records,
                                     const std::string& instruction, const EmbedFn& embed,
                                     uint64_t seed, int threads) {
  std::map<int64_t, size_t> classes;
  for (const LabeledRecord& r : records) classes[r.label_id] += 1;
  if (classes.size() < 2) throw ValidationError("eval_clustering: need at least 2 gold classes");
  if (records.size() < classes.size()) {
    throw ValidationError("eval_clustering: fewer records than clusters");
  }

  std::vector<std::string> texts;
  for (const LabeledRecord& r : records) texts.push_back(format_query(instruction, r.text));
  const std::vector<Embedding> embs = embed_all(texts, embed, threads);

  const std::vector<size_t> assign = kmeans(embs, classes.size(), seed);
  std::vector<int64_t> gold;
  for (const LabeledRecord& r : records) gold.push_back(r.label_id);
  return v_measure(gold, assign);
}

namespace {

json parse_jsonl_line(const std::string& path, size_t lineno, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_jsonl_line(path, lineno, line);
    try {
      fn(j);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

EvalBundle load_eval_bundle(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream task_in(base / "task.json");
  if (!task_in) throw IoError("cannot open " + (base / "task.json").string());
  json task;
  try {
    task = json::parse(task_in);
  } catch (const json::exception& e) {
    throw ValidationError((base / "task.json").string() + ": " + e.what());
  }

  EvalBundle bundle;
  bundle.kind = parse_eval_kind(task.at("kind").get<std::string>());
  bundle.name = task.value("name", fs::path(dir).filename().string());
  bundle.instruction = task.at("instruction").get<std::string>();
  if (bundle.instruction.empty()) {
    throw ValidationError((base / "task.json").string() + ": empty instruction");
  }

  switch (bundle.kind) {
    case EvalKind::Retrieval: {
      for_each_jsonl((base / "queries.jsonl").string(), [&](const json& j) {
        bundle.queries.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
      });
      for_each_jsonl((base / "corpus.jsonl").string(), [&](const json& j) {
        bundle.corpus.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
      });
      for_each_jsonl((base / "qrels.jsonl").string(), [&](const json& j) {
        bundle.qrels[j.at("query_id").get<std::string>()][j.at("doc_id").get<std::string>()] =
            j.value("relevance", 1.0);
      });
      break;
    }
    case EvalKind::STS: {
      for_each_jsonl((base / "pairs.jsonl").string(), [&](const json& j) {
        bundle.sts_pairs.push_back({j.at("sentence_a").get<std::string>(),
                                    j.at("sentence_b").get<std::string>(),
                                    j.at("score").get<double>()});
      });
      break;
    }
    case EvalKind::Classification:
    case EvalKind::Clustering: {
      for_each_jsonl((base / "records.jsonl").string(), [&](const json& j) {
        bundle.records.push_back({j.at("text").get<std::string>(),
                                  j.at("label_id").get<int64_t>(), j.value("label_text", "")});
      });
      break;
    }
  }
  return bundle;
}

std::vector<MetricReport> run_eval(const EvalBundle& bundle, const EmbedFn& embed, uint64_t seed,
                                   int threads) {
  std::vector<MetricReport> reports;
  switch (bundle.kind) {
    case EvalKind::Retrieval: {
      const RetrievalEvalResult r = eval_retrieval(bundle.queries, bundle.corpus, bundle.qrels,
                                                   bundle.instruction, embed, threads);
      reports.push_back({bundle.name, "ndcg_at_10", r.ndcg_at_10});
      reports.push_back({bundle.name, "recall_at_1", r.recall_at_1});
      reports.push_back({bundle.name, "recall_at_10", r.recall_at_10});
      break;
    }
    case EvalKind::STS:
      reports.push_back(
          {bundle.name, "spearman", eval_sts(bundle.sts_pairs, bundle.instruction, embed, threads)});
      break;
    case EvalKind::Classification:
      reports.push_back({bundle.name, "accuracy",
                         eval_classification(bundle.records, bundle.instruction, embed, threads)});
      break;
    case EvalKind::Clustering: {
      const ClusteringEvalResult r =
          eval_clustering(bundle.records, bundle.instruction, embed, seed, threads);
      reports.push_back({bundle.name, "v_measure", r.v_measure});
      reports.push_back({bundle.name, "homogeneity", r.homogeneity});
      reports.push_back({bundle.name, "completeness", r.completeness});
      break;
    }
  }
  return reports;
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
  size_t task_w = 4, metric_w = 6;
  for (const MetricReport& r : reports) {
    task_w = std::max(task_w, r.task.size());
    metric_w = std::max(metric_w, r.metric.size());
  }
  std::ostringstream out;
  out << std::left;
  out.width(static_cast<std::streamsize>(task_w));
  out << "task";
  out << "  ";
  out.width(static_cast<std::streamsize>(metric_w));
  out << "metric";
  out << "  value\n";
  for (const MetricReport& r : reports) {
    out.width(static_cast<std::streamsize>(task_w));
    out << r.task;
    out << "  ";
    out.width(static_cast<std::streamsize>(metric_w));
    out << r.metric;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "  %.6f", r.value);
    out << buf << '\n';
  }
  return out.str();
}

}  // namespace embkit
