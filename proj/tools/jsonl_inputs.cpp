#include "jsonl_inputs.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"

namespace embkit::cli {

using nlohmann::json;

namespace {

template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      fn(j);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<IdText> read_id_text(const std::string& path) {
  std::vector<IdText> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
  });
  return out;
}

std::vector<std::pair<std::string, std::string>> read_relations(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for_each_line(path, [&](const json& j) {
    out.emplace_back(j.at("query_id").get<std::string>(), j.at("doc_id").get<std::string>());
  });
  return out;
}

std::vector<NliRecord> read_nli(const std::string& path) {
  std::vector<NliRecord> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({j.at("premise").get<std::string>(), j.at("hypothesis").get<std::string>(),
                   parse_nli_label(j.at("label").get<std::string>())});
  });
  return out;
}

std::vector<StsRecord> read_sts(const std::string& path) {
  std::vector<StsRecord> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({j.at("sentence_a").get<std::string>(), j.at("sentence_b").get<std::string>(),
                   j.at("score").get<double>()});
  });
  return out;
}

std::vector<DuplicatePair> read_duplicates(const std::string& path) {
  std::vector<DuplicatePair> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({j.at("question_a").get<std::string>(), j.at("question_b").get<std::string>(),
                   j.at("is_duplicate").get<bool>()});
  });
  return out;
}

std::vector<LabeledRecord> read_labeled(const std::string& path) {
  std::vector<LabeledRecord> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({j.at("text").get<std::string>(), j.at("label_id").get<int64_t>(),
                   j.value("label_text", "")});
  });
  return out;
}

}  // namespace embkit::cli
