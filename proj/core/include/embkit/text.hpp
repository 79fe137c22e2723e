#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace embkit {

// FNV-1a 64-bit. Fixed constants, identical on every platform.
inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Codepoints with the Unicode White_Space property.
bool is_unicode_whitespace(uint32_t cp);

// Splits UTF-8 text on Unicode whitespace. Invalid byte sequences are
// consumed one byte at a time as U+FFFD (never whitespace), so the split is
// total and deterministic on arbitrary input.
std::vector<std::string> split_whitespace(std::string_view text);

// ASCII-only lowercasing, applied byte-wise.
std::string ascii_lower(std::string_view s);

}  // namespace embkit
