#include "embkit/adapters.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "embkit/errors.hpp"
#include "embkit/parallel.hpp"
#include "embkit/rng.hpp"
#include "embkit/similarity.hpp"
#include "embkit/text.hpp"

namespace embkit {

namespace {

constexpr uint64_t kNliTag = 0x6e6c692d706f73ULL;
constexpr uint64_t kMulticlassTag = 0x6d756c74692d6bULL;

std::string numbered_id(const char* prefix, size_t i, const char* suffix = "") {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu%s", prefix, i, suffix);
  return buf;
}

// Deduplicates texts preserving first-appearance order and assigns
// zero-padded ids with the given prefix.
struct TextCorpus {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::unordered_map<std::string, size_t> index;

  size_t add(const std::string& text, const char* prefix) {
    auto it = index.find(text);
    if (it != index.end()) return it->second;
    const size_t i = texts.size();
    index.emplace(text, i);
    ids.push_back(numbered_id(prefix, i));
    texts.push_back(text);
    return i;
  }
};

EmbeddingMatrix embed_corpus(const TextCorpus& corpus, const EmbedFn& teacher, int threads) {
  std::vector<Embedding> rows(corpus.texts.size());
  parallel_for(corpus.texts.size(), threads,
               [&](size_t i) { rows[i] = teacher(corpus.texts[i]); });
  return EmbeddingMatrix::from_rows(corpus.ids, rows);
}

}  // namespace

NliLabel parse_nli_label(const std::string& name) {
  if (name == "entailment") return NliLabel::Entailment;
  if (name == "neutral") return NliLabel::Neutral;
  if (name == "contradiction") return NliLabel::Contradiction;
  throw ValidationError("unknown NLI label: \"" + name + "\"");
}

AdaptResult adapt_retrieval(const std::vector<IdText>& queries,
                            const std::vector<IdText>& passages,
                            const std::vector<std::pair<std::string, std::string>>& relations,
                            const EmbedFn& teacher, const MinerConfig& config,
                            const std::string& instruction, const std::string& source,
                            uint64_t seed, int threads) {
  std::unordered_set<std::string> query_ids;
  for (const IdText& q : queries) {
    if (!query_ids.insert(q.id).second) {
      throw ValidationError("adapt_retrieval: duplicate query id \"" + q.id + "\"");
    }
  }
  std::unordered_set<std::string> passage_ids;
  for (const IdText& p : passages) passage_ids.insert(p.id);

  std::map<std::string, std::vector<std::string>> rel_map;
  for (const auto& [qid, did] : relations) {
    if (!query_ids.count(qid)) {
      throw ValidationError("adapt_retrieval: relation references unknown query \"" + qid + "\"");
    }
    if (!passage_ids.count(did)) {
      throw ValidationError("adapt_retrieval: relation references unknown passage \"" + did + "\"");
    }
    rel_map[qid].push_back(did);
  }

  std::vector<std::string> pids, ptexts;
  pids.reserve(passages.size());
  ptexts.reserve(passages.size());
  std::vector<Embedding> prows(passages.size());
  parallel_for(passages.size(), threads,
               [&](size_t i) { prows[i] = teacher(passages[i].text); });
  for (const IdText& p : passages) {
    pids.push_back(p.id);
    ptexts.push_back(p.text);
  }
  const EmbeddingMatrix matrix = EmbeddingMatrix::from_rows(pids, prows);

  std::vector<MiningQuery> mining(queries.size());
  parallel_for(queries.size(), threads, [&](size_t i) {
    mining[i] = {queries[i].id, queries[i].text, teacher(queries[i].text)};
  });

  MineDatasetResult mined = mine_dataset(mining, matrix, ptexts, rel_map, config, instruction,
                                         source, seed, threads);
  AdaptResult out;
  out.samples = std::move(mined.samples);
  out.discards = std::move(mined.discards);
  out.attempted = queries.size();
  out.clamped_top_k = mined.clamped_top_k;
  return out;
}

AdaptResult adapt_nli(const std::vector<NliRecord>& records, const EmbedFn& teacher,
                      const MinerConfig& config, const std::string& instruction,
                      const std::string& source, uint64_t seed, int threads) {
  config.validate();

  struct PremiseGroup {
    std::string premise;
    std::vector<std::string> entailed;
    std::vector<std::string> others;  // neutral + contradiction, record order
  };
  std::vector<PremiseGroup> groups;
  std::unordered_map<std::string, size_t> group_of;
  TextCorpus hyp_corpus;
  for (const NliRecord& r : records) {
    auto it = group_of.find(r.premise);
    if (it == group_of.end()) {
      it = group_of.emplace(r.premise, groups.size()).first;
      groups.push_back({r.premise, {}, {}});
    }
    if (r.label == NliLabel::Entailment) {
      groups[it->second].entailed.push_back(r.hypothesis);
    } else {
      groups[it->second].others.push_back(r.hypothesis);
    }
    hyp_corpus.add(r.hypothesis, "h");
  }

  const EmbeddingMatrix matrix = embed_corpus(hyp_corpus, teacher, threads);
  std::unordered_map<std::string, size_t> row_of_id;
  for (size_t i = 0; i < matrix.rows(); ++i) row_of_id.emplace(matrix.ids[i], i);

  const size_t pool = negative_pool_size(TaskType::Retrieval);

  struct PerPremise {
    bool retained = false;
    bool discarded = false;
    std::string reason;
    TrainingSample sample;
    bool clamped = false;
  };
  std::vector<PerPremise> results(groups.size());

  parallel_for(groups.size(), threads, [&](size_t gi) {
    const PremiseGroup& g = groups[gi];
    PerPremise& r = results[gi];
    if (g.entailed.empty()) return;  // dropped, reported below
    r.retained = true;

    Rng rng(derive_seed(seed, kNliTag, fnv1a64(g.premise)));
    const std::string& positive = g.entailed[rng.below(g.entailed.size())];

    std::vector<std::string> negatives;
    for (const std::string& h : g.others) {
      if (h != positive) negatives.push_back(h);
      if (negatives.size() == pool) break;
    }

    if (negatives.size() < pool) {
      std::set<std::string> exclude;
      for (const std::string& h : g.entailed) exclude.insert(hyp_corpus.ids[hyp_corpus.index.at(h)]);
      for (const std::string& h : g.others) exclude.insert(hyp_corpus.ids[hyp_corpus.index.at(h)]);

      const Embedding premise_vec = teacher(g.premise);
      const size_t positive_row = hyp_corpus.index.at(positive);
      const double positive_score =
          cosine(premise_vec, Embedding(matrix.row(positive_row).begin(),
                                        matrix.row(positive_row).end()));

      MinerConfig remainder = config;
      remainder.keep = pool - negatives.size();
      const MineOutcome mined = mine(premise_vec, positive_score, matrix, remainder, exclude);
      r.clamped = mined.clamped_top_k;
      if (mined.discarded) {
        r.discarded = true;
        r.reason = mined.discard_reason;
        return;
      }
      for (const ScoredId& n : mined.negatives) {
        negatives.push_back(hyp_corpus.texts[row_of_id.at(n.id)]);
      }
    }

    r.sample = {source, TaskType::Retrieval, instruction, g.premise, positive,
                std::move(negatives)};
  });

  AdaptResult out;
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    PerPremise& r = results[gi];
    out.clamped_top_k = out.clamped_top_k || r.clamped;
    if (!r.retained) {
      out.discards.push_back({groups[gi].premise, "no-entailed-hypothesis"});
      continue;
    }
    ++out.attempted;
    if (r.discarded) {
      out.discards.push_back({groups[gi].premise, r.reason});
      continue;
    }
    r.sample.validate("premise \"" + groups[gi].premise + "\"");
    out.samples.push_back(std::move(r.sample));
  }
  return out;
}

AdaptResult adapt_sts(const std::vector<StsRecord>& records, const EmbedFn& teacher,
                      const MinerConfig& config, const std::string& instruction,
                      const std::string& source, uint64_t seed, int threads) {
  TextCorpus corpus;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].score < 0.0 || records[i].score > 5.0) {
      throw ValidationError("adapt_sts: record " + std::to_string(i) +
                            " has score outside [0, 5]");
    }
    corpus.add(records[i].sentence_a, "s");
    corpus.add(records[i].sentence_b, "s");
  }
  const EmbeddingMatrix matrix = embed_corpus(corpus, teacher, threads);

  auto row_vec = [&](size_t row) {
    return Embedding(matrix.row(row).begin(), matrix.row(row).end());
  };

  std::vector<MiningQuery> queries;
  std::map<std::string, std::vector<std::string>> relations;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].score < 4.0) continue;
    const size_t a = corpus.index.at(records[i].sentence_a);
    const size_t b = corpus.index.at(records[i].sentence_b);
    queries.push_back({numbered_id("q", i, ":ab"), records[i].sentence_a, row_vec(a)});
    relations[queries.back().id] = {corpus.ids[b]};
    queries.push_back({numbered_id("q", i, ":ba"), records[i].sentence_b, row_vec(b)});
    relations[queries.back().id] = {corpus.ids[a]};
  }

  MineDatasetResult mined = mine_dataset(queries, matrix, corpus.texts, relations, config,
                                         instruction, source, seed, threads);
  AdaptResult out;
  out.samples = std::move(mined.samples);
  out.discards = std::move(mined.discards);
  out.attempted = queries.size();
  out.clamped_top_k = mined.clamped_top_k;
  return out;
}

AdaptResult adapt_duplicates(const std::vector<DuplicatePair>& pairs, const EmbedFn& teacher,
                             const MinerConfig& config, const std::string& instruction,
                             const std::string& source, uint64_t seed, int threads) {
  TextCorpus corpus;
  for (const DuplicatePair& p : pairs) {
    corpus.add(p.question_a, "d");
    corpus.add(p.question_b, "d");
  }
  const EmbeddingMatrix matrix = embed_corpus(corpus, teacher, threads);

  std::vector<MiningQuery> queries;
  std::map<std::string, std::vector<std::string>> relations;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].is_duplicate) continue;
    const size_t a = corpus.index.at(pairs[i].question_a);
    const size_t b = corpus.index.at(pairs[i].question_b);
    queries.push_back({numbered_id("q", i), pairs[i].question_a,
                       Embedding(matrix.row(a).begin(), matrix.row(a).end())});
    relations[queries.back().id] = {corpus.ids[b]};
  }

  MineDatasetResult mined = mine_dataset(queries, matrix, corpus.texts, relations, config,
                                         instruction, source, seed, threads);
  AdaptResult out;
  out.samples = std::move(mined.samples);
  out.discards = std::move(mined.discards);
  out.attempted = queries.size();
  out.clamped_top_k = mined.clamped_top_k;
  return out;
}

namespace {

// label_id -> label_text map with bijectivity checks.
std::map<int64_t, std::string> label_map(const std::vector<LabeledRecord>& records,
                                         const char* who) {
  std::map<int64_t, std::string> labels;
  std::unordered_map<std::string, int64_t> reverse;
  for (const LabeledRecord& r : records) {
    if (r.label_text.empty()) {
      throw ValidationError(std::string(who) + ": empty label text");
    }
    auto it = labels.find(r.label_id);
    if (it == labels.end()) {
      labels.emplace(r.label_id, r.label_text);
      auto rit = reverse.find(r.label_text);
      if (rit != reverse.end()) {
        throw ValidationError(std::string(who) + ": label text \"" + r.label_text +
                              "\" maps to multiple label ids");
      }
      reverse.emplace(r.label_text, r.label_id);
    } else if (it->second != r.label_text) {
      throw ValidationError(std::string(who) + ": label id " + std::to_string(r.label_id) +
                            " maps to multiple label texts");
    }
  }
  return labels;
}

}  // namespace

AdaptResult adapt_binary_classification(const std::vector<LabeledRecord>& records,
                                        const std::string& instruction,
                                        const std::string& source) {
  const auto labels = label_map(records, "adapt_binary_classification");
  if (labels.size() != 2) {
    throw ValidationError("adapt_binary_classification: expected exactly 2 classes, found " +
                          std::to_string(labels.size()));
  }
  AdaptResult out;
  out.attempted = records.size();
  for (const LabeledRecord& r : records) {
    std::string other;
    for (const auto& [id, text] : labels) {
      if (id != r.label_id) other = text;
    }
    TrainingSample s{source, TaskType::Classification, instruction, r.text, r.label_text,
                     {other}};
    s.validate("record " + std::to_string(out.samples.size()));
    out.samples.push_back(std::move(s));
  }
  return out;
}

AdaptResult adapt_multiclass(const std::vector<LabeledRecord>& records,
                             const std::string& instruction, const std::string& source,
                             uint64_t seed, size_t num_negatives) {
  const auto labels = label_map(records, "adapt_multiclass");
  if (labels.size() < 2) {
    throw ValidationError("adapt_multiclass: need at least 2 classes, found " +
                          std::to_string(labels.size()));
  }

  std::map<int64_t, std::vector<size_t>> members;
  for (size_t i = 0; i < records.size(); ++i) members[records[i].label_id].push_back(i);
  for (const auto& [label, idx] : members) {
    if (records.size() - idx.size() < num_negatives) {
      throw ValidationError("adapt_multiclass: class " + std::to_string(label) + " leaves " +
                            std::to_string(records.size() - idx.size()) +
                            " out-of-class records, need " + std::to_string(num_negatives));
    }
  }

  AdaptResult out;
  for (size_t i = 0; i < records.size(); ++i) {
    const LabeledRecord& r = records[i];
    const auto& same_class = members.at(r.label_id);
    if (same_class.size() < 2) {
      out.discards.push_back({r.text, "singleton-class"});
      continue;
    }
    ++out.attempted;

    Rng rng(derive_seed(seed, kMulticlassTag, static_cast<uint64_t>(i)));

    // Uniform same-class pick skipping the record itself.
    size_t pos_slot = rng.below(same_class.size() - 1);
    size_t pos_index = 0;
    for (size_t m : same_class) {
      if (m == i) continue;
      if (pos_slot == 0) {
        pos_index = m;
        break;
      }
      --pos_slot;
    }
    const std::string& positive = records[pos_index].text;

    std::vector<size_t> pool;
    pool.reserve(records.size());
    for (size_t j = 0; j < records.size(); ++j) {
      if (records[j].label_id != r.label_id && records[j].text != positive) pool.push_back(j);
    }
    if (pool.size() < num_negatives) {
      out.discards.push_back({r.text, "insufficient-distinct-negatives"});
      --out.attempted;
      continue;
    }

    TrainingSample s;
    s.source = source;
    s.task = TaskType::Clustering;
    s.instruction = instruction;
    s.query = r.text;
    s.positive = positive;
    for (size_t slot : rng.distinct(pool.size(), num_negatives)) {
      s.negatives.push_back(records[pool[slot]].text);
    }
    s.validate("record " + std::to_string(i));
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace embkit
