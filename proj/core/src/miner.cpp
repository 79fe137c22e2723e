#include "embkit/miner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "embkit/errors.hpp"
#include "embkit/parallel.hpp"
#include "embkit/rng.hpp"
#include "embkit/similarity.hpp"
#include "embkit/text.hpp"

namespace embkit {

using nlohmann::json;

namespace {
constexpr char kMatrixMagic[9] = "EMBKMAT1";
constexpr uint64_t kPositiveTag = 0x706f732d70696bULL;  // positive sampling stream
// Strictness guard: candidates at or within 1e-12 of a threshold are
// rejected, so emitted scores sit strictly below both bounds.
constexpr double kThresholdEpsilon = 1e-12;
}  // namespace

void MinerConfig::validate() const {
  if (exclude_top >= top_k) {
    throw ValidationError("miner config: exclude_top must be < top_k");
  }
  if (!(rel_factor > 0.0 && rel_factor <= 1.0)) {
    throw ValidationError("miner config: rel_factor must be in (0, 1]");
  }
  if (keep > top_k - exclude_top) {
    throw ValidationError("miner config: keep must be <= top_k - exclude_top");
  }
  if (keep == 0) throw ValidationError("miner config: keep must be >= 1");
}

void EmbeddingMatrix::validate() const {
  if (data.size() != rows() * static_cast<size_t>(dim)) {
    throw ValidationError("embedding matrix: data size does not match ids x dim");
  }
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < rows(); ++i) {
    if (!seen.insert(ids[i]).second) {
      throw ValidationError("embedding matrix: duplicate id \"" + ids[i] + "\"");
    }
    double nsq = 0.0;
    for (float x : row(i)) {
      if (!std::isfinite(x)) {
        throw ValidationError("embedding matrix: non-finite value in row " + std::to_string(i));
      }
      nsq += static_cast<double>(x) * x;
    }
    if (std::fabs(std::sqrt(nsq) - 1.0) > 1e-5) {
      throw ValidationError("embedding matrix: row " + std::to_string(i) +
                            " (id \"" + ids[i] + "\") is not unit norm");
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::from_rows(std::vector<std::string> ids,
                                           const std::vector<Embedding>& rows) {
  if (ids.size() != rows.size()) {
    throw ValidationError("embedding matrix: ids and rows size mismatch");
  }
  EmbeddingMatrix m;
  m.ids = std::move(ids);
  m.dim = rows.empty() ? 0 : static_cast<uint32_t>(rows[0].size());
  m.data.reserve(rows.size() * m.dim);
  for (const Embedding& r : rows) {
    if (r.size() != m.dim) throw ValidationError("embedding matrix: ragged rows");
    for (double x : r) m.data.push_back(static_cast<float>(x));
  }
  return m;
}

void save_matrix(const std::string& path, const EmbeddingMatrix& m, bool as_jsonl) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    if (as_jsonl) {
      for (size_t i = 0; i < m.rows(); ++i) {
        json j;
        j["id"] = m.ids[i];
        json vec = json::array();
        for (float x : m.row(i)) vec.push_back(x);
        j["vector"] = std::move(vec);
        out << j.dump() << '\n';
      }
    } else {
      out.write(kMatrixMagic, 8);
      detail::put_u32(out, static_cast<uint32_t>(m.rows()));
      detail::put_u32(out, m.dim);
      detail::put_f32_array(out, m.data);
      for (const std::string& id : m.ids) detail::put_string(out, id);
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8] = {0};
  in.read(magic, 8);
  EmbeddingMatrix m;
  if (in && std::string(magic, 8) == kMatrixMagic) {
    const uint32_t n = detail::get_u32(in);
    m.dim = detail::get_u32(in);
    m.data = detail::get_f32_array(in, static_cast<size_t>(n) * m.dim);
    m.ids.reserve(n);
    for (uint32_t i = 0; i < n; ++i) m.ids.push_back(detail::get_string(in));
  } else {
    in.clear();
    in.seekg(0);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
        m.ids.push_back(j.at("id").get<std::string>());
        const auto vec = j.at("vector").get<std::vector<double>>();
        if (m.dim == 0) m.dim = static_cast<uint32_t>(vec.size());
        if (vec.size() != m.dim) {
          throw ValidationError("vector length differs from previous rows");
        }
        for (double x : vec) m.data.push_back(static_cast<float>(x));
      } catch (const json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
      } catch (const ValidationError& e) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  m.validate();
  return m;
}

namespace {

double cosine_to_row(const Embedding& q, double q_norm, std::span<const float> row) {
  double d = 0.0;
  double nsq = 0.0;
  for (size_t k = 0; k < row.size(); ++k) {
    const double x = static_cast<double>(row[k]);
    d += q[k] * x;
    nsq += x * x;
  }
  return d / (q_norm * std::sqrt(nsq));
}

bool ranks_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::vector<ScoredId> score_all(const Embedding& query_vec, const EmbeddingMatrix& corpus,
                                int threads) {
  if (corpus.dim != query_vec.size()) {
    throw ValidationError("top_k: query dimension does not match corpus");
  }
  const double q_norm = l2_norm(query_vec);
  if (q_norm == 0.0) throw ValidationError("top_k: zero-norm query vector");
  std::vector<ScoredId> scored(corpus.rows());
  parallel_for(corpus.rows(), threads, [&](size_t i) {
    scored[i] = {corpus.ids[i], cosine_to_row(query_vec, q_norm, corpus.row(i))};
  });
  return scored;
}

}  // namespace

std::vector<ScoredId> top_k(const Embedding& query_vec, const EmbeddingMatrix& corpus,
                            size_t k, int threads) {
  if (k > corpus.rows()) {
    throw ValidationError("top_k: k=" + std::to_string(k) + " exceeds corpus size " +
                          std::to_string(corpus.rows()));
  }
  std::vector<ScoredId> scored = score_all(query_vec, corpus, threads);
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), ranks_before);
  scored.resize(k);
  return scored;
}

MineOutcome mine(const Embedding& query_vec, double positive_score,
                 const EmbeddingMatrix& corpus, const MinerConfig& config,
                 const std::set<std::string>& exclude_ids) {
  config.validate();
  if (positive_score < -1.0 - 1e-6 || positive_score > 1.0 + 1e-6) {
    throw ValidationError("mine: positive_score outside [-1, 1]");
  }
  MineOutcome out;
  const size_t k_eff = std::min(config.top_k, corpus.rows());
  out.clamped_top_k = k_eff < config.top_k;

  const std::vector<ScoredId> ranked = top_k(query_vec, corpus, k_eff, 1);

  // Rank numbering is fixed by the raw ranking; excluded ids drop out
  // wherever they sit without renumbering the rest.
  std::vector<ScoredId> candidates;
  for (size_t r = config.exclude_top; r < ranked.size(); ++r) {
    if (exclude_ids.count(ranked[r].id)) continue;
    candidates.push_back(ranked[r]);
  }
  if (candidates.empty()) {
    out.discarded = true;
    out.discard_reason = "empty-candidates";
    return out;
  }

  const double rel_bound = config.rel_factor * positive_score;
  std::vector<ScoredId> survivors;
  for (const ScoredId& c : candidates) {
    if (c.score < config.abs_ceiling - kThresholdEpsilon &&
        c.score < rel_bound - kThresholdEpsilon) {
      survivors.push_back(c);
    }
  }
  if (survivors.size() < config.keep) {
    out.discarded = true;
    out.discard_reason = "fewer-than-24";
    return out;
  }
  survivors.resize(config.keep);
  out.negatives = std::move(survivors);
  return out;
}

MineDatasetResult mine_dataset(const std::vector<MiningQuery>& queries,
                               const EmbeddingMatrix& corpus,
                               const std::vector<std::string>& corpus_texts,
                               const std::map<std::string, std::vector<std::string>>& relations,
                               const MinerConfig& config, const std::string& instruction,
                               const std::string& source, uint64_t seed, int threads) {
  config.validate();
  corpus.validate();
  if (corpus_texts.size() != corpus.rows()) {
    throw ValidationError("mine_dataset: corpus texts do not align with matrix rows");
  }

  std::unordered_map<std::string, size_t> index_of;
  index_of.reserve(corpus.rows());
  for (size_t i = 0; i < corpus.rows(); ++i) index_of.emplace(corpus.ids[i], i);

  // Passages sharing one text are interchangeable for the positive-exclusion
  // rule, so group ids by text up front.
  std::unordered_map<std::string, std::vector<std::string>> ids_by_text;
  for (size_t i = 0; i < corpus.rows(); ++i) {
    ids_by_text[corpus_texts[i]].push_back(corpus.ids[i]);
  }

  std::unordered_set<std::string> seen_query_ids;
  for (const MiningQuery& q : queries) {
    if (!seen_query_ids.insert(q.id).second) {
      throw ValidationError("mine_dataset: duplicate query id \"" + q.id + "\"");
    }
    auto rel = relations.find(q.id);
    if (rel == relations.end() || rel->second.empty()) {
      throw ValidationError("mine_dataset: query \"" + q.id + "\" has no related passages");
    }
    for (const std::string& pid : rel->second) {
      if (!index_of.count(pid)) {
        throw ValidationError("mine_dataset: relation for query \"" + q.id +
                              "\" references unknown passage \"" + pid + "\"");
      }
    }
  }

  struct PerQuery {
    MineOutcome outcome;
    std::string positive_text;
  };
  std::vector<PerQuery> results(queries.size());

  parallel_for(queries.size(), threads, [&](size_t qi) {
    const MiningQuery& q = queries[qi];
    const std::vector<std::string>& related = relations.at(q.id);

    Rng rng(derive_seed(seed, kPositiveTag, fnv1a64(q.id)));
    const std::string& positive_id = related[rng.below(related.size())];
    const size_t positive_row = index_of.at(positive_id);
    const std::string& positive_text = corpus_texts[positive_row];

    std::set<std::string> exclude(related.begin(), related.end());
    for (const std::string& same_text_id : ids_by_text.at(positive_text)) {
      exclude.insert(same_text_id);
    }

    const double q_norm = l2_norm(q.vector);
    if (q_norm == 0.0) throw ValidationError("mine_dataset: zero-norm query vector");
    const double positive_score = cosine_to_row(q.vector, q_norm, corpus.row(positive_row));

    results[qi].outcome = mine(q.vector, positive_score, corpus, config, exclude);
    results[qi].positive_text = positive_text;
  });

  std::vector<size_t> order(queries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return queries[a].id < queries[b].id; });

  MineDatasetResult out;
  for (size_t qi : order) {
    const PerQuery& r = results[qi];
    out.clamped_top_k = out.clamped_top_k || r.outcome.clamped_top_k;
    if (r.outcome.discarded) {
      out.discards.push_back({queries[qi].id, r.outcome.discard_reason});
      continue;
    }
    TrainingSample s;
    s.source = source;
    s.task = TaskType::Retrieval;
    s.instruction = instruction;
    s.query = queries[qi].text;
    s.positive = r.positive_text;
    s.negatives.reserve(r.outcome.negatives.size());
    for (const ScoredId& n : r.outcome.negatives) {
      s.negatives.push_back(corpus_texts[index_of.at(n.id)]);
    }
    s.validate("query \"" + queries[qi].id + "\"");
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace embkit
