#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embkit/types.hpp"

namespace embkit {

struct EncoderConfig {
  uint32_t buckets = 65536;
  uint32_t dim = 64;
  uint32_t max_tokens = 1024;
  uint64_t seed = 42;

  void validate() const;
};

// Hashing-table weights and AdamW state. Storage is float32 so checkpoints
// round-trip bit-exactly; all arithmetic on these values runs in double.
struct EncoderParams {
  std::vector<float> table;   // buckets x dim, row-major
  std::vector<float> proj;    // dim x dim, row-major
  std::vector<float> m_table;
  std::vector<float> v_table;
  std::vector<float> m_proj;
  std::vector<float> v_proj;
  int64_t step = 0;
  // Bumped on every optimizer update; tapes are valid only for the revision
  // they were recorded against.
  uint64_t revision = 0;
};

// table/proj i.i.d. uniform in [-0.05, 0.05] from the config seed; moments
// start at zero.
EncoderParams init_params(const EncoderConfig& config);

// Lowercases (ASCII), splits on Unicode whitespace, hashes each token with
// FNV-1a 64 mod buckets, truncates to max_tokens.
std::vector<uint32_t> tokenize(const std::string& text, const EncoderConfig& config);

// Forward-pass record for backward().
struct Tape {
  std::vector<uint32_t> ids;
  std::vector<double> pooled;
  std::vector<double> pre_norm;
  double norm = 0.0;
  Embedding unit;
  uint64_t revision = 0;
  bool consumed = false;
};

// mean(table rows) -> proj -> L2 normalize. Empty token lists pool the
// bucket-0 row so encode is total.
Embedding encode(const std::string& text, const EncoderParams& params,
                 const EncoderConfig& config);
Embedding encode(const std::string& text, const EncoderParams& params,
                 const EncoderConfig& config, Tape& tape);

// Sparse parameter-gradient accumulator. std::map keeps reduction order
// deterministic.
struct GradBuffer {
  std::map<uint32_t, std::vector<double>> table_rows;
  std::vector<double> proj;

  explicit GradBuffer(const EncoderConfig& config)
      : proj(static_cast<size_t>(config.dim) * config.dim, 0.0), dim_(config.dim) {}

  std::vector<double>& row(uint32_t bucket);
  double squared_norm() const;
  void scale(double factor);

 private:
  uint32_t dim_;
};

// Chain rule through normalization, projection and mean pooling. Consumes
// the tape; reuse or a parameter-revision mismatch throws.
void backward(Tape& tape, const std::vector<double>& grad_embedding,
              const EncoderParams& params, const EncoderConfig& config,
              GradBuffer& grads);

// d/dv of (v/|v|) applied to upstream g, evaluated from the recorded unit
// vector and norm: (g - (g.e)e) / |v|. Exposed for Jacobian tests.
std::vector<double> normalize_backward(const std::vector<double>& unit, double norm,
                                       const std::vector<double>& grad);

// Checkpoint file: magic, JSON header {buckets, dim, seed, step,
// has_optimizer}, then row-major little-endian float32 matrices.
void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const EncoderConfig& config, bool with_optimizer);

struct Checkpoint {
  EncoderConfig config;
  EncoderParams params;
  bool has_optimizer = false;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace embkit
