#include "embkit/encoder.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "embkit/errors.hpp"
#include "embkit/rng.hpp"
#include "embkit/text.hpp"

namespace embkit {

using nlohmann::json;

namespace {
constexpr uint64_t kInitTag = 0x656e632d696e6974ULL;  // "enc-init"
constexpr char kCheckpointMagic[9] = "EMBKCKP1";
}  // namespace

void EncoderConfig::validate() const {
  if (buckets < 1) throw ValidationError("encoder config: buckets must be >= 1");
  if (dim < 2) throw ValidationError("encoder config: dim must be >= 2");
  if (max_tokens < 1) throw ValidationError("encoder config: max_tokens must be >= 1");
}

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  const size_t table_n = static_cast<size_t>(config.buckets) * config.dim;
  const size_t proj_n = static_cast<size_t>(config.dim) * config.dim;
  p.table.resize(table_n);
  p.proj.resize(proj_n);
  Rng rng(derive_seed(config.seed, kInitTag));
  for (auto& w : p.table) w = static_cast<float>((rng.unit() * 2.0 - 1.0) * 0.05);
  for (auto& w : p.proj) w = static_cast<float>((rng.unit() * 2.0 - 1.0) * 0.05);
  p.m_table.assign(table_n, 0.0f);
  p.v_table.assign(table_n, 0.0f);
  p.m_proj.assign(proj_n, 0.0f);
  p.v_proj.assign(proj_n, 0.0f);
  p.step = 0;
  p.revision = 0;
  return p;
}

std::vector<uint32_t> tokenize(const std::string& text, const EncoderConfig& config) {
  std::vector<uint32_t> ids;
  for (const std::string& token : split_whitespace(text)) {
    if (ids.size() >= config.max_tokens) break;
    const uint64_t h = fnv1a64(ascii_lower(token));
    ids.push_back(static_cast<uint32_t>(h % config.buckets));
  }
  return ids;
}

namespace {

Embedding encode_impl(const std::string& text, const EncoderParams& params,
                      const EncoderConfig& config, Tape* tape) {
  const uint32_t d = config.dim;
  std::vector<uint32_t> ids = tokenize(text, config);

  std::vector<double> pooled(d, 0.0);
  if (ids.empty()) {
    // Empty-text guard: pool the bucket-0 row so encode stays total.
    for (uint32_t k = 0; k < d; ++k) pooled[k] = params.table[k];
  } else {
    for (uint32_t id : ids) {
      const size_t base = static_cast<size_t>(id) * d;
      for (uint32_t k = 0; k < d; ++k) pooled[k] += params.table[base + k];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (double& x : pooled) x *= inv;
  }

  std::vector<double> v(d, 0.0);
  for (uint32_t i = 0; i < d; ++i) {
    double s = 0.0;
    const size_t base = static_cast<size_t>(i) * d;
    for (uint32_t j = 0; j < d; ++j) s += static_cast<double>(params.proj[base + j]) * pooled[j];
    v[i] = s;
  }

  double nsq = 0.0;
  for (double x : v) nsq += x * x;
  const double norm = std::sqrt(nsq);
  if (!std::isfinite(norm) || norm == 0.0) {
    throw ValidationError("encode: non-finite or zero pre-normalization vector");
  }

  Embedding unit(d);
  for (uint32_t i = 0; i < d; ++i) unit[i] = v[i] / norm;
  for (double x : unit) {
    if (!std::isfinite(x)) throw ValidationError("encode: non-finite embedding");
  }

  if (tape) {
    tape->ids = std::move(ids);
    tape->pooled = std::move(pooled);
    tape->pre_norm = std::move(v);
    tape->norm = norm;
    tape->unit = unit;
    tape->revision = params.revision;
    tape->consumed = false;
  }
  return unit;
}

}  // namespace

Embedding encode(const std::string& text, const EncoderParams& params,
                 const EncoderConfig& config) {
  return encode_impl(text, params, config, nullptr);
}

Embedding encode(const std::string& text, const EncoderParams& params,
                 const EncoderConfig& config, Tape& tape) {
  return encode_impl(text, params, config, &tape);
}

std::vector<double>& GradBuffer::row(uint32_t bucket) {
  auto it = table_rows.find(bucket);
  if (it == table_rows.end()) {
    it = table_rows.emplace(bucket, std::vector<double>(dim_, 0.0)).first;
  }
  return it->second;
}

double GradBuffer::squared_norm() const {
  double s = 0.0;
  for (const auto& [bucket, row] : table_rows) {
    for (double g : row) s += g * g;
  }
  for (double g : proj) s += g * g;
  return s;
}

void GradBuffer::scale(double factor) {
  for (auto& [bucket, row] : table_rows) {
    for (double& g : row) g *= factor;
  }
  for (double& g : proj) g *= factor;
}

std::vector<double> normalize_backward(const std::vector<double>& unit, double norm,
                                       const std::vector<double>& grad) {
  double ge = 0.0;
  for (size_t i = 0; i < unit.size(); ++i) ge += grad[i] * unit[i];
  std::vector<double> out(unit.size());
  for (size_t i = 0; i < unit.size(); ++i) out[i] = (grad[i] - ge * unit[i]) / norm;
  return out;
}

void backward(Tape& tape, const std::vector<double>& grad_embedding,
              const EncoderParams& params, const EncoderConfig& config,
              GradBuffer& grads) {
  if (tape.consumed) throw ValidationError("backward: tape already consumed");
  if (tape.revision != params.revision) {
    throw ValidationError("backward: tape does not match current parameters");
  }
  if (grad_embedding.size() != config.dim) {
    throw ValidationError("backward: gradient dimension mismatch");
  }
  tape.consumed = true;

  const uint32_t d = config.dim;
  const std::vector<double> g_v = normalize_backward(tape.unit, tape.norm, grad_embedding);

  // v = proj * pooled
  std::vector<double> g_pooled(d, 0.0);
  for (uint32_t i = 0; i < d; ++i) {
    const size_t base = static_cast<size_t>(i) * d;
    for (uint32_t j = 0; j < d; ++j) {
      grads.proj[base + j] += g_v[i] * tape.pooled[j];
      g_pooled[j] += static_cast<double>(params.proj[base + j]) * g_v[i];
    }
  }

  if (tape.ids.empty()) {
    std::vector<double>& row = grads.row(0);
    for (uint32_t k = 0; k < d; ++k) row[k] += g_pooled[k];
  } else {
    const double inv = 1.0 / static_cast<double>(tape.ids.size());
    for (uint32_t id : tape.ids) {
      std::vector<double>& row = grads.row(id);
      for (uint32_t k = 0; k < d; ++k) row[k] += g_pooled[k] * inv;
    }
  }
}

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const EncoderConfig& config, bool with_optimizer) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kCheckpointMagic, 8);
    json header;
    header["buckets"] = config.buckets;
    header["dim"] = config.dim;
    header["max_tokens"] = config.max_tokens;
    header["seed"] = config.seed;
    header["step"] = params.step;
    header["has_optimizer"] = with_optimizer;
    detail::put_string(out, header.dump());
    detail::put_f32_array(out, params.table);
    detail::put_f32_array(out, params.proj);
    if (with_optimizer) {
      detail::put_f32_array(out, params.m_table);
      detail::put_f32_array(out, params.v_table);
      detail::put_f32_array(out, params.m_proj);
      detail::put_f32_array(out, params.v_proj);
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kCheckpointMagic) {
    throw ValidationError(path + ": not an encoder checkpoint");
  }
  json header;
  try {
    header = json::parse(detail::get_string(in));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  ck.config.buckets = header.at("buckets").get<uint32_t>();
  ck.config.dim = header.at("dim").get<uint32_t>();
  ck.config.max_tokens = header.value("max_tokens", 1024u);
  ck.config.seed = header.at("seed").get<uint64_t>();
  ck.config.validate();
  ck.has_optimizer = header.value("has_optimizer", false);

  const size_t table_n = static_cast<size_t>(ck.config.buckets) * ck.config.dim;
  const size_t proj_n = static_cast<size_t>(ck.config.dim) * ck.config.dim;
  ck.params.step = header.at("step").get<int64_t>();
  ck.params.table = detail::get_f32_array(in, table_n);
  ck.params.proj = detail::get_f32_array(in, proj_n);
  if (ck.has_optimizer) {
    ck.params.m_table = detail::get_f32_array(in, table_n);
    ck.params.v_table = detail::get_f32_array(in, table_n);
    ck.params.m_proj = detail::get_f32_array(in, proj_n);
    ck.params.v_proj = detail::get_f32_array(in, proj_n);
  } else {
    ck.params.m_table.assign(table_n, 0.0f);
    ck.params.v_table.assign(table_n, 0.0f);
    ck.params.m_proj.assign(proj_n, 0.0f);
    ck.params.v_proj.assign(proj_n, 0.0f);
  }
  for (float w : ck.params.table) {
    if (!std::isfinite(w)) throw ValidationError(path + ": non-finite table weight");
  }
  for (float w : ck.params.proj) {
    if (!std::isfinite(w)) throw ValidationError(path + ": non-finite proj weight");
  }
  return ck;
}

}  // namespace embkit
