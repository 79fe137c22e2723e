#include "embkit/samples_io.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"

namespace embkit {

using nlohmann::json;

namespace {

TrainingSample sample_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  TrainingSample s;
  s.source = j.at("source").get<std::string>();
  s.task = parse_task_type(j.at("task").get<std::string>());
  s.instruction = j.at("instruction").get<std::string>();
  s.query = j.at("query").get<std::string>();
  s.positive = j.at("positive").get<std::string>();
  s.negatives = j.at("negatives").get<std::vector<std::string>>();
  return s;
}

json sample_to_json(const TrainingSample& s) {
  json j;
  j["source"] = s.source;
  j["task"] = to_string(s.task);
  j["instruction"] = s.instruction;
  j["query"] = s.query;
  j["positive"] = s.positive;
  j["negatives"] = s.negatives;
  return j;
}

}  // namespace

std::vector<TrainingSample> read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<TrainingSample> samples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": malformed JSON: " + e.what());
    }
    try {
      TrainingSample s = sample_from_json(j);
      s.validate("sample " + std::to_string(samples.size()));
      samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return samples;
}

void write_samples(const std::vector<TrainingSample>& samples, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    for (size_t i = 0; i < samples.size(); ++i) {
      samples[i].validate("sample " + std::to_string(i));
      out << sample_to_json(samples[i]).dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace embkit
