#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace embkit {

// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_digest_hex(const std::string& path);

struct ManifestInput {
  std::string path;
  std::string digest;
};

// Written atomically at run start so every command is replayable from its
// resolved configuration and input digests.
struct RunManifest {
  std::string command;
  std::string config_json;  // resolved config, compact JSON text
  uint64_t config_hash = 0;
  std::vector<ManifestInput> inputs;
  uint64_t seed = 0;
  std::string started_at;  // UTC, ISO-8601
};

RunManifest make_manifest(const std::string& command, const std::string& config_json,
                          const std::vector<std::string>& input_paths, uint64_t seed);

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace embkit
