#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "embkit/miner.hpp"
#include "embkit/types.hpp"

namespace embkit {

// Teacher embedding provider; adapters embed raw (uninstructed) texts with
// it when building mining corpora.
using EmbedFn = std::function<Embedding(const std::string&)>;

struct IdText {
  std::string id;
  std::string text;
};

enum class NliLabel { Entailment, Neutral, Contradiction };
NliLabel parse_nli_label(const std::string& name);

struct NliRecord {
  std::string premise;
  std::string hypothesis;
  NliLabel label = NliLabel::Entailment;
};

struct StsRecord {
  std::string sentence_a;
  std::string sentence_b;
  double score = 0.0;  // [0, 5]
};

struct DuplicatePair {
  std::string question_a;
  std::string question_b;
  bool is_duplicate = false;
};

struct LabeledRecord {
  std::string text;
  int64_t label_id = 0;
  std::string label_text;
};

struct AdaptResult {
  std::vector<TrainingSample> samples;
  std::vector<DiscardRecord> discards;
  // Query-positive pairs constructed before mining discards.
  size_t attempted = 0;
  bool clamped_top_k = false;
};

// Query-passage datasets (plain retrieval, question answering,
// summarization with the summary as query): sampled positive per query plus
// mined negatives.
AdaptResult adapt_retrieval(const std::vector<IdText>& queries,
                            const std::vector<IdText>& passages,
                            const std::vector<std::pair<std::string, std::string>>& relations,
                            const EmbedFn& teacher, const MinerConfig& config,
                            const std::string& instruction, const std::string& source,
                            uint64_t seed, int threads = 1);

// Premises with at least one entailed hypothesis become queries; one entailed
// hypothesis is sampled as positive, same-premise neutral/contradiction
// hypotheses fill the first negative slots, and the remainder is mined over
// the hypothesis corpus. Premises that cannot reach a full pool are
// discarded.
AdaptResult adapt_nli(const std::vector<NliRecord>& records, const EmbedFn& teacher,
                      const MinerConfig& config, const std::string& instruction,
                      const std::string& source, uint64_t seed, int threads = 1);

// Pairs scoring >= 4 yield both (a -> b) and (b -> a); every sentence joins
// the mining corpus regardless of score.
AdaptResult adapt_sts(const std::vector<StsRecord>& records, const EmbedFn& teacher,
                      const MinerConfig& config, const std::string& instruction,
                      const std::string& source, uint64_t seed, int threads = 1);

// Duplicate pairs become query-positive pairs (first element as query);
// non-duplicates contribute corpus sentences only.
AdaptResult adapt_duplicates(const std::vector<DuplicatePair>& pairs, const EmbedFn& teacher,
                             const MinerConfig& config, const std::string& instruction,
                             const std::string& source, uint64_t seed, int threads = 1);

// Two-class datasets: query = text, positive = own label text, single
// negative = the other label text. No mining.
AdaptResult adapt_binary_classification(const std::vector<LabeledRecord>& records,
                                        const std::string& instruction,
                                        const std::string& source);

// Multi-way classification / clustering: positive = random same-class
// record, negatives = num_negatives distinct out-of-class records.
AdaptResult adapt_multiclass(const std::vector<LabeledRecord>& records,
                             const std::string& instruction, const std::string& source,
                             uint64_t seed, size_t num_negatives = 24);

}  // namespace embkit
