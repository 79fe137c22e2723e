#include "embkit/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "embkit/errors.hpp"

namespace embkit {

HardLossResult hard_negative_loss(const SimilarityRow& row) {
  if (row.temperature <= 0.0) {
    throw ValidationError("hard_negative_loss: temperature must be > 0");
  }
  if (row.neg_scores.empty()) {
    throw ValidationError("hard_negative_loss: at least one negative score required");
  }
  const double inv_tau = 1.0 / row.temperature;
  const size_t n = row.neg_scores.size();

  double max_logit = row.pos_score * inv_tau;
  for (double s : row.neg_scores) max_logit = std::max(max_logit, s * inv_tau);

  // loss = lse(logits) - pos_logit, with exponents shifted by the max.
  const double e_pos = std::exp(row.pos_score * inv_tau - max_logit);
  double sum = e_pos;
  std::vector<double> e_negs(n);
  for (size_t j = 0; j < n; ++j) {
    e_negs[j] = std::exp(row.neg_scores[j] * inv_tau - max_logit);
    sum += e_negs[j];
  }

  HardLossResult r;
  r.loss = std::log(sum) - (row.pos_score * inv_tau - max_logit);
  r.grad_pos = (e_pos / sum - 1.0) * inv_tau;
  r.grad_negs.resize(n);
  for (size_t j = 0; j < n; ++j) r.grad_negs[j] = (e_negs[j] / sum) * inv_tau;
  return r;
}

InBatchLossResult in_batch_loss(const BatchScores& scores, size_t i, double temperature) {
  if (temperature <= 0.0) throw ValidationError("in_batch_loss: temperature must be > 0");
  if (scores.size == 0) throw ValidationError("in_batch_loss: empty batch");
  if (i >= scores.size) {
    throw ValidationError("in_batch_loss: index " + std::to_string(i) +
                          " out of range for batch of " + std::to_string(scores.size));
  }
  const double inv_tau = 1.0 / temperature;
  const size_t b = scores.size;

  double max_logit = scores.at(i, 0) * inv_tau;
  for (size_t j = 1; j < b; ++j) max_logit = std::max(max_logit, scores.at(i, j) * inv_tau);

  double sum = 0.0;
  std::vector<double> e(b);
  for (size_t j = 0; j < b; ++j) {
    e[j] = std::exp(scores.at(i, j) * inv_tau - max_logit);
    sum += e[j];
  }

  InBatchLossResult r;
  r.loss = std::log(sum) - (scores.at(i, i) * inv_tau - max_logit);
  r.grad_row.resize(b);
  for (size_t j = 0; j < b; ++j) {
    r.grad_row[j] = (e[j] / sum - (j == i ? 1.0 : 0.0)) * inv_tau;
  }
  return r;
}

double combined_loss(double hard, std::optional<double> in_batch, TaskType task) {
  if (task == TaskType::Retrieval) {
    if (!in_batch.has_value()) {
      throw ValidationError("combined_loss: retrieval sample requires an in-batch term");
    }
    return hard + *in_batch;
  }
  if (in_batch.has_value()) {
    throw ValidationError("combined_loss: in-batch term supplied for non-retrieval sample");
  }
  return hard;
}

}  // namespace embkit
