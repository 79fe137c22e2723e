#pragma once

// Little-endian binary primitives shared by the checkpoint and embedding
// matrix readers/writers. Byte order is explicit so files are portable.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "embkit/errors.hpp"

namespace embkit::detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

inline float get_f32(std::istream& in) {
  const uint32_t v = get_u32(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline void put_f32_array(std::ostream& out, const std::vector<float>& a) {
  for (float f : a) put_f32(out, f);
}

inline std::vector<float> get_f32_array(std::istream& in, size_t n) {
  std::vector<float> a(n);
  for (size_t i = 0; i < n; ++i) a[i] = get_f32(in);
  return a;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("unexpected end of file");
  return s;
}

}  // namespace embkit::detail
