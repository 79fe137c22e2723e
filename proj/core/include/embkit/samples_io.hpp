#pragma once

#include <string>
#include <vector>

#include "embkit/types.hpp"

namespace embkit {

// JSONL, one sample per line:
//   {"source": str, "task": "retrieval"|"classification"|"clustering",
//    "instruction": str, "query": str, "positive": str, "negatives": [str]}
// Reading validates every sample; errors carry the 1-based line number.
std::vector<TrainingSample> read_samples(const std::string& path);
void write_samples(const std::vector<TrainingSample>& samples, const std::string& path);

}  // namespace embkit
