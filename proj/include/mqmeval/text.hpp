#pragma once

// UTF-8 helpers: decoding, Unicode whitespace, simple case folding and
// whitespace word tokenization. Only what span alignment and the parsers
// need; no normalization forms.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mqmeval::text {

struct CodePoint {
  char32_t value;
  std::size_t begin;  // byte offset
  std::size_t end;
};

/// Decodes UTF-8. Invalid bytes decode to U+FFFD one byte at a time, so
/// every input is accepted.
inline std::vector<CodePoint> decode(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if (b0 < 0x80) {
      cp = b0;
    } else {
      std::size_t need = 0;
      char32_t acc = 0;
      if ((b0 & 0xE0) == 0xC0) {
        need = 1;
        acc = b0 & 0x1F;
      } else if ((b0 & 0xF0) == 0xE0) {
        need = 2;
        acc = b0 & 0x0F;
      } else if ((b0 & 0xF8) == 0xF0) {
        need = 3;
        acc = b0 & 0x07;
      }
      bool ok = need > 0 && i + need < s.size();
      if (ok) {
        for (std::size_t k = 1; k <= need; ++k) {
          if (i + k >= s.size()) {
            ok = false;
            break;
          }
          const auto bk = static_cast<unsigned char>(s[i + k]);
          if ((bk & 0xC0) != 0x80) {
            ok = false;
            break;
          }
          acc = (acc << 6) | (bk & 0x3F);
        }
      }
      if (ok) {
        cp = acc;
        len = need + 1;
      }
    }
    out.push_back({cp, i, i + len});
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

/// White_Space property code points.
constexpr bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

/// Simple one-to-one lowercase mapping for Latin, Greek and Cyrillic.
constexpr char32_t fold(char32_t c) {
  if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x100 && c <= 0x137 && c != 0x130) return c | 1;
  if (c >= 0x139 && c <= 0x148) return (c & 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return c | 1;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c & 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x460 && c <= 0x481) return c | 1;
  if (c >= 0x48A && c <= 0x4BF) return c | 1;
  if (c >= 0x4D0 && c <= 0x4FF) return c | 1;
  return c;
}

/// Byte range of one whitespace-delimited word.
struct WordRange {
  std::size_t begin;
  std::size_t end;
};

inline std::vector<WordRange> tokenize(std::string_view s) {
  std::vector<WordRange> words;
  bool in_word = false;
  std::size_t start = 0;
  for (const auto& cp : decode(s)) {
    if (is_space(cp.value)) {
      if (in_word) words.push_back({start, cp.begin});
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      start = cp.begin;
    }
  }
  if (in_word) words.push_back({start, s.size()});
  return words;
}

inline int word_count(std::string_view s) { return static_cast<int>(tokenize(s).size()); }

inline std::string_view trim(std::string_view s) {
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    parts.emplace_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

}  // namespace mqmeval::text
