#include "pheno/unicode.hpp"

#include <unicode/uchar.h>
#include <unicode/ustring.h>
#include <unicode/utf16.h>
#include <unicode/utf8.h>

#include "pheno/error.hpp"

namespace pheno::unicode {

std::u32string decode(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  const auto size = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < size) {
    UChar32 c;
    U8_NEXT(bytes, i, size, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
    if (error) {
      n = 0;
      U8_APPEND_UNSAFE(buf, n, 0xFFFD);
    }
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

bool is_valid_utf8(std::string_view utf8) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  const auto size = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < size) {
    UChar32 c;
    U8_NEXT(bytes, i, size, c);
    if (c < 0) return false;
  }
  return true;
}

std::size_t length(std::string_view utf8) {
  std::size_t n = 0;
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  const auto size = static_cast<int32_t>(utf8.size());
  int32_t i = 0;
  while (i < size) {
    U8_FWD_1(bytes, i, size);
    ++n;
  }
  return n;
}

std::string substr(std::string_view utf8, TextSpan span) {
  const auto text = decode(utf8);
  if (span.begin > span.end || span.end > text.size()) {
    throw ValidationError("span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                          ") out of bounds for text of length " + std::to_string(text.size()));
  }
  return encode(std::u32string_view(text).substr(span.begin, span.length()));
}

bool is_word_char(char32_t c) {
  const auto cp = static_cast<UChar32>(c);
  return u_isalnum(cp) || (U_GET_GC_MASK(cp) & U_GC_M_MASK) != 0;
}

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

std::u32string lower(char32_t c) {
  UChar src[2];
  int32_t src_len = 0;
  U16_APPEND_UNSAFE(src, src_len, static_cast<UChar32>(c));
  UChar dest[8];
  UErrorCode status = U_ZERO_ERROR;
  const int32_t n = u_strToLower(dest, 8, src, src_len, "", &status);
  if (U_FAILURE(status)) return std::u32string(1, c);
  std::u32string out;
  int32_t i = 0;
  while (i < n) {
    UChar32 cp;
    U16_NEXT(dest, i, n, cp);
    out.push_back(static_cast<char32_t>(cp));
  }
  return out;
}

char32_t lower_simple(char32_t c) {
  return static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
}

std::string lower(std::string_view utf8) {
  std::u32string out;
  for (char32_t c : decode(utf8)) out += lower(c);
  return encode(out);
}

std::vector<std::string> word_tokens(std::string_view utf8) {
  std::vector<std::string> tokens;
  std::u32string current;
  for (char32_t c : decode(utf8)) {
    if (is_word_char(c)) {
      current += lower(c);
    } else if (!current.empty()) {
      tokens.push_back(encode(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(encode(current));
  return tokens;
}

}  // namespace pheno::unicode
