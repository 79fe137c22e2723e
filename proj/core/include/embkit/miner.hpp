#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "embkit/types.hpp"

namespace embkit {

struct MinerConfig {
  size_t top_k = 100;
  size_t exclude_top = 5;
  double abs_ceiling = 0.8;
  double rel_factor = 0.95;
  size_t keep = 24;

  void validate() const;
};

// Unit-norm teacher vectors for a passage corpus. float32 storage matches
// the on-disk matrix format; scores are accumulated in double.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  uint32_t dim = 0;
  std::vector<float> data;  // rows() x dim, row-major

  size_t rows() const { return ids.size(); }
  std::span<const float> row(size_t i) const {
    return {data.data() + i * static_cast<size_t>(dim), dim};
  }
  // Checks unique ids and row norms within 1e-5 of unit.
  void validate() const;

  static EmbeddingMatrix from_rows(std::vector<std::string> ids,
                                   const std::vector<Embedding>& rows);
};

// Binary: magic "EMBKMAT1", u32 N, u32 D, N*D little-endian float32,
// then N length-prefixed ids. JSONL alternative: {"id": str, "vector": [f]}.
// load_matrix sniffs the magic to pick the parser.
void save_matrix(const std::string& path, const EmbeddingMatrix& m, bool as_jsonl = false);
EmbeddingMatrix load_matrix(const std::string& path);

struct ScoredId {
  std::string id;
  double score = 0.0;
};

// Exact cosine ranking over the whole corpus, descending score, ties broken
// by ascending id. Throws if k > corpus size.
std::vector<ScoredId> top_k(const Embedding& query_vec, const EmbeddingMatrix& corpus,
                            size_t k, int threads = 1);

struct MineOutcome {
  bool discarded = false;
  std::string discard_reason;            // "fewer-than-24" or "empty-candidates"
  std::vector<ScoredId> negatives;       // exactly config.keep when not discarded
  bool clamped_top_k = false;            // corpus smaller than top_k
};

// Candidate pool = ranks (exclude_top, top_k] of the full ranking, minus
// exclude_ids; keeps candidates scoring below both the absolute ceiling and
// rel_factor * positive_score (strict, with a 1e-12 guard); returns the
// config.keep best survivors in rank order or a discard.
MineOutcome mine(const Embedding& query_vec, double positive_score,
                 const EmbeddingMatrix& corpus, const MinerConfig& config,
                 const std::set<std::string>& exclude_ids = {});

struct MiningQuery {
  std::string id;
  std::string text;
  Embedding vector;
};

struct DiscardRecord {
  std::string query_id;
  std::string reason;
};

struct MineDatasetResult {
  std::vector<TrainingSample> samples;   // sorted by query id
  std::vector<DiscardRecord> discards;   // sorted by query id
  bool clamped_top_k = false;
};

// Per query: samples a positive uniformly from its related passages (seeded
// by query id), mines negatives with all related passages and any passage
// textually equal to the positive excluded, and emits one TrainingSample per
// surviving query. Queries mine concurrently; the merge order is query id.
MineDatasetResult mine_dataset(const std::vector<MiningQuery>& queries,
                               const EmbeddingMatrix& corpus,
                               const std::vector<std::string>& corpus_texts,
                               const std::map<std::string, std::vector<std::string>>& relations,
                               const MinerConfig& config, const std::string& instruction,
                               const std::string& source, uint64_t seed, int threads = 1);

}  // namespace embkit
