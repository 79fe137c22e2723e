#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace embkit {

enum class TaskType { Retrieval, Classification, Clustering };

// Size of the stored hard-negative pool for each task family.
inline size_t negative_pool_size(TaskType task) {
  return task == TaskType::Classification ? 1 : 24;
}

const char* to_string(TaskType task);
TaskType parse_task_type(const std::string& name);

// Unit-norm dense vector. Kept at full double precision in memory; file
// formats store float32.
using Embedding = std::vector<double>;

// One unified training tuple: an instructed query, its positive passage and
// an ordered pool of hard negatives.
struct TrainingSample {
  std::string source;
  TaskType task = TaskType::Retrieval;
  std::string instruction;
  std::string query;
  std::string positive;
  std::vector<std::string> negatives;

  // Throws ValidationError naming the offending field; `where` prefixes the
  // message (e.g. "sample 17").
  void validate(const std::string& where = {}) const;
};

bool operator==(const TrainingSample& a, const TrainingSample& b);

// `Instruct: {instruction}\nQuery: {query}` -- one newline, exact prefixes,
// no whitespace added around the newline.
std::string format_query(const std::string& instruction, const std::string& query);

}  // namespace embkit
