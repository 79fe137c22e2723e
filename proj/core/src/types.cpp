#include "embkit/types.hpp"

#include <algorithm>

#include "embkit/errors.hpp"

namespace embkit {

const char* to_string(TaskType task) {
  switch (task) {
    case TaskType::Retrieval:
      return "retrieval";
    case TaskType::Classification:
      return "classification";
    case TaskType::Clustering:
      return "clustering";
  }
  return "retrieval";
}

TaskType parse_task_type(const std::string& name) {
  if (name == "retrieval") return TaskType::Retrieval;
  if (name == "classification") return TaskType::Classification;
  if (name == "clustering") return TaskType::Clustering;
  throw ValidationError("unknown task type: \"" + name + "\"");
}

void TrainingSample::validate(const std::string& where) const {
  const std::string at = where.empty() ? std::string() : where + ": ";
  if (instruction.empty()) throw ValidationError(at + "instruction is empty");
  if (query.empty()) throw ValidationError(at + "query is empty");
  if (positive.empty()) throw ValidationError(at + "positive is empty");
  const size_t want = negative_pool_size(task);
  if (negatives.size() != want) {
    throw ValidationError(at + "task \"" + to_string(task) + "\" requires " +
                          std::to_string(want) + " negatives, got " +
                          std::to_string(negatives.size()));
  }
  if (std::find(negatives.begin(), negatives.end(), positive) != negatives.end()) {
    throw ValidationError(at + "positive passage appears among negatives");
  }
}

bool operator==(const TrainingSample& a, const TrainingSample& b) {
  return a.source == b.source && a.task == b.task && a.instruction == b.instruction &&
         a.query == b.query && a.positive == b.positive && a.negatives == b.negatives;
}

std::string format_query(const std::string& instruction, const std::string& query) {
  if (instruction.empty()) throw ValidationError("format_query: instruction is empty");
  if (query.empty()) throw ValidationError("format_query: query is empty");
  std::string out;
  out.reserve(instruction.size() + query.size() + 18);
  out += "Instruct: ";
  out += instruction;
  out += '\n';
  out += "Query: ";
  out += query;
  return out;
}

}  // namespace embkit
