#pragma once

// Raw-input JSONL readers for the convert/mine/embed commands.

#include <string>
#include <utility>
#include <vector>

#include "embkit/adapters.hpp"

namespace embkit::cli {

// {"id": str, "text": str}
std::vector<IdText> read_id_text(const std::string& path);

// {"query_id": str, "doc_id": str}
std::vector<std::pair<std::string, std::string>> read_relations(const std::string& path);

// {"premise": str, "hypothesis": str, "label": "entailment"|"neutral"|"contradiction"}
std::vector<NliRecord> read_nli(const std::string& path);

// {"sentence_a": str, "sentence_b": str, "score": number}
std::vector<StsRecord> read_sts(const std::string& path);

// {"question_a": str, "question_b": str, "is_duplicate": bool}
std::vector<DuplicatePair> read_duplicates(const std::string& path);

// {"text": str, "label_id": int, "label_text": str}
std::vector<LabeledRecord> read_labeled(const std::string& path);

}  // namespace embkit::cli
