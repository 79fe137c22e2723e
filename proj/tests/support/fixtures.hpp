#pragma once

// Shared synthetic fixtures for unit and acceptance tests.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <unordered_map>
#include <vector>

#include "embkit/adapters.hpp"
#include "embkit/miner.hpp"
#include "embkit/similarity.hpp"
#include "embkit/types.hpp"

namespace fixtures {

inline embkit::Embedding random_unit_vector(std::mt19937_64& rng, size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  embkit::Embedding v(dim);
  for (double& x : v) x = normal(rng);
  embkit::l2_normalize(v);
  return v;
}

inline embkit::EmbeddingMatrix random_unit_matrix(size_t n, size_t dim, uint64_t seed,
                                                  const char* prefix = "p") {
  std::mt19937_64 rng(seed);
  std::vector<std::string> ids;
  std::vector<embkit::Embedding> rows;
  for (size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, i);
    ids.emplace_back(buf);
    rows.push_back(random_unit_vector(rng, dim));
  }
  return embkit::EmbeddingMatrix::from_rows(std::move(ids), rows);
}

// Text -> unit vector store; lookups strip the query instruction prefix so
// the same store serves query-side and passage-side embeddings.
struct FakeModel {
  std::unordered_map<std::string, embkit::Embedding> vectors;

  void set(const std::string& text, embkit::Embedding v) {
    embkit::l2_normalize(v);
    vectors[text] = std::move(v);
  }

  embkit::EmbedFn fn() const {
    return [this](const std::string& text) {
      std::string key = text;
      if (key.rfind("Instruct: ", 0) == 0) {
        const size_t pos = key.find("\nQuery: ");
        if (pos != std::string::npos) key = key.substr(pos + 8);
      }
      auto it = vectors.find(key);
      if (it == vectors.end()) throw std::runtime_error("FakeModel: no vector for \"" + key + "\"");
      return it->second;
    };
  }
};

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("embkit-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

// ---- templated paraphrase clusters ----

struct ParaphraseCorpus {
  std::vector<std::string> texts;  // cluster-major: clusters * per_cluster
  std::vector<size_t> cluster_of;
  std::vector<std::string> heldout;
  std::vector<size_t> heldout_cluster;
  size_t clusters = 0;
  size_t per_cluster = 0;
};

inline std::string synth_word(std::mt19937_64& rng) {
  static const char* consonants = "bcdfgklmnprstvz";
  static const char* vowels = "aeiou";
  std::uniform_int_distribution<size_t> c(0, 14), v(0, 4);
  std::string w;
  for (int i = 0; i < 3; ++i) {
    w += consonants[c(rng)];
    w += vowels[v(rng)];
  }
  return w;
}

// Each cluster gets two topic words; a paraphrase mixes them with four
// fillers drawn from a small shared pool, so same-cluster pairs score above
// cross-cluster ones under any bag-of-words encoder while the filler overlap
// keeps cross-cluster texts close enough to mine hard negatives from.
inline ParaphraseCorpus make_paraphrase_corpus(size_t clusters, size_t per_cluster,
                                               size_t heldout_per_cluster, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> fillers;
  for (int i = 0; i < 8; ++i) fillers.push_back(synth_word(rng));

  ParaphraseCorpus out;
  out.clusters = clusters;
  out.per_cluster = per_cluster;
  std::uniform_int_distribution<size_t> pick_filler(0, fillers.size() - 1);

  for (size_t c = 0; c < clusters; ++c) {
    const std::string topic_a = synth_word(rng) + synth_word(rng);
    const std::string topic_b = synth_word(rng) + synth_word(rng);
    auto make_text = [&]() {
      std::string text = topic_a;
      text += " " + fillers[pick_filler(rng)];
      text += " " + topic_b;
      for (int f = 0; f < 3; ++f) text += " " + fillers[pick_filler(rng)];
      return text;
    };
    for (size_t p = 0; p < per_cluster; ++p) {
      out.texts.push_back(make_text());
      out.cluster_of.push_back(c);
    }
    for (size_t p = 0; p < heldout_per_cluster; ++p) {
      out.heldout.push_back(make_text());
      out.heldout_cluster.push_back(c);
    }
  }
  return out;
}

// Structurally valid retrieval samples straight from a paraphrase corpus:
// positive = next paraphrase in the cluster, negatives = 24 out-of-cluster
// texts. (The mined path is exercised elsewhere; this keeps trainer tests
// independent of mining.)
inline std::vector<embkit::TrainingSample> make_paraphrase_training_samples(
    const ParaphraseCorpus& corpus, const std::string& source, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<embkit::TrainingSample> samples;
  for (size_t i = 0; i < corpus.texts.size(); ++i) {
    const size_t c = corpus.cluster_of[i];
    const size_t base = c * corpus.per_cluster;
    const size_t next = base + (i - base + 1) % corpus.per_cluster;
    embkit::TrainingSample s;
    s.source = source;
    s.task = embkit::TaskType::Retrieval;
    s.instruction = "Retrieve semantically similar text.";
    s.query = corpus.texts[i];
    s.positive = corpus.texts[next];
    while (s.negatives.size() < 24) {
      const size_t j = rng() % corpus.texts.size();
      if (corpus.cluster_of[j] == c || corpus.texts[j] == s.positive) continue;
      s.negatives.push_back(corpus.texts[j]);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---- linearly separable synthetic sentiment ----

inline std::vector<embkit::LabeledRecord> make_sentiment_records(size_t n, uint64_t seed) {
  static const std::vector<std::string> positive = {"wonderful", "delightful", "superb",
                                                    "excellent", "charming",   "brilliant",
                                                    "uplifting", "marvelous"};
  static const std::vector<std::string> negative = {"terrible", "dreadful", "awful",
                                                    "boring",   "clumsy",   "dismal",
                                                    "grating",  "lifeless"};
  static const std::vector<std::string> neutral = {"movie", "film",   "plot", "acting",
                                                   "scene", "pacing", "cast", "ending"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pol(0, positive.size() - 1);
  std::uniform_int_distribution<size_t> neu(0, neutral.size() - 1);

  std::vector<embkit::LabeledRecord> records;
  for (size_t i = 0; i < n; ++i) {
    const bool is_positive = i % 2 == 0;
    const auto& pool = is_positive ? positive : negative;
    std::string text = pool[pol(rng)] + " " + neutral[neu(rng)] + " " + pool[pol(rng)] + " " +
                       neutral[neu(rng)] + " " + pool[pol(rng)];
    records.push_back({text, is_positive ? int64_t{1} : int64_t{0},
                       is_positive ? "positive" : "negative"});
  }
  return records;
}

}  // namespace fixtures
