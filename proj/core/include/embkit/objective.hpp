#pragma once

#include <optional>
#include <vector>

#include "embkit/types.hpp"

namespace embkit {

constexpr double kDefaultTemperature = 0.05;

// One query's similarity scores: s(q, d+) and s(q, d-_j). Scores coming from
// cosine lie in [-1, 1]; the loss itself only requires tau > 0 and a
// non-empty negative list.
struct SimilarityRow {
  double pos_score = 0.0;
  std::vector<double> neg_scores;
  double temperature = kDefaultTemperature;
};

struct HardLossResult {
  double loss = 0.0;
  double grad_pos = 0.0;              // d loss / d pos_score
  std::vector<double> grad_negs;      // d loss / d neg_scores[j]
};

// -log( e^{p/tau} / (e^{p/tau} + sum_j e^{n_j/tau}) ), stabilized by max
// subtraction. Gradients are softmax weights scaled by 1/tau.
HardLossResult hard_negative_loss(const SimilarityRow& row);

// S[i][j] = s(q_i, d+_j) for a batch of B query/positive pairs.
struct BatchScores {
  size_t size = 0;
  std::vector<double> values;  // size x size, row-major

  BatchScores() = default;
  explicit BatchScores(size_t b) : size(b), values(b * b, 0.0) {}
  double& at(size_t i, size_t j) { return values[i * size + j]; }
  double at(size_t i, size_t j) const { return values[i * size + j]; }
};

struct InBatchLossResult {
  double loss = 0.0;
  std::vector<double> grad_row;  // d loss / d S[i][j]
};

// -log( e^{S[i][i]/tau} / sum_j e^{S[i][j]/tau} ); the denominator ranges
// over every positive in the batch, including j == i.
InBatchLossResult in_batch_loss(const BatchScores& scores, size_t i,
                                double temperature = kDefaultTemperature);

// Unweighted sum for retrieval samples; hard loss alone otherwise. Supplying
// an in-batch term for a non-retrieval sample (or omitting it for a
// retrieval sample) is a contract violation.
double combined_loss(double hard, std::optional<double> in_batch, TaskType task);

}  // namespace embkit
