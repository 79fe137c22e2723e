#include "embkit/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "embkit/errors.hpp"
#include "embkit/text.hpp"
#include "embkit/version.hpp"

namespace embkit {

using nlohmann::json;

std::string file_digest_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return hex;
}

RunManifest make_manifest(const std::string& command, const std::string& config_json,
                          const std::vector<std::string>& input_paths, uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config_json = config_json;
  m.config_hash = fnv1a64(config_json);
  for (const std::string& p : input_paths) m.inputs.push_back({p, file_digest_hex(p)});
  m.seed = seed;

  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
  m.started_at = stamp;
  return m;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  json j;
  j["version"] = EMBKIT_VERSION;
  j["command"] = m.command;
  j["config"] = json::parse(m.config_json);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.config_hash));
  j["config_hash"] = hex;
  json inputs = json::array();
  for (const ManifestInput& in : m.inputs) {
    inputs.push_back({{"path", in.path}, {"digest", in.digest}});
  }
  j["inputs"] = std::move(inputs);
  j["seed"] = m.seed;
  j["started_at"] = m.started_at;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace embkit
